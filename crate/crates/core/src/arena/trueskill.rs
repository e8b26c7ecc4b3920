//! Two-player TrueSkill: rating updates, match quality and matchmaking.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use super::{ArenaError, MatchRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueSkillParams {
    pub mu: f64,
    pub sigma: f64,
    pub beta: f64,
    pub tau: f64,
    pub draw_probability: f64,
}

impl Default for TrueSkillParams {
    fn default() -> Self {
        let mu = 25.0;
        let sigma = mu / 3.0;
        Self {
            mu,
            sigma,
            beta: sigma / 2.0,
            tau: sigma / 100.0,
            draw_probability: 0.10,
        }
    }
}

fn std_normal() -> Normal {
    Normal::standard()
}

impl TrueSkillParams {
    /// Performance-difference margin below which a game counts as drawn.
    pub fn draw_margin(&self) -> f64 {
        std_normal().inverse_cdf((self.draw_probability + 1.0) / 2.0) * 2f64.sqrt() * self.beta
    }

    pub fn fresh(&self) -> Rating {
        Rating {
            mu: self.mu,
            sigma: self.sigma,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rating {
    pub mu: f64,
    pub sigma: f64,
}

impl Default for Rating {
    fn default() -> Self {
        TrueSkillParams::default().fresh()
    }
}

impl Rating {
    /// `mu − 3·sigma`, the usual leaderboard key.
    pub fn conservative(&self) -> f64 {
        self.mu - 3.0 * self.sigma
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    AWins,
    BWins,
    Draw,
}

fn v_win(t: f64, e: f64) -> f64 {
    let n = std_normal();
    let x = t - e;
    let denom = n.cdf(x);
    if denom < f64::MIN_POSITIVE {
        -x
    } else {
        n.pdf(x) / denom
    }
}

fn w_win(t: f64, e: f64) -> f64 {
    let v = v_win(t, e);
    v * (v + t - e)
}

fn v_draw(t: f64, e: f64) -> f64 {
    let n = std_normal();
    let denom = n.cdf(e - t) - n.cdf(-e - t);
    if denom < f64::MIN_POSITIVE {
        return if t < 0.0 { -t - e } else { -t + e };
    }
    (n.pdf(-e - t) - n.pdf(e - t)) / denom
}

fn w_draw(t: f64, e: f64) -> f64 {
    let n = std_normal();
    let denom = n.cdf(e - t) - n.cdf(-e - t);
    if denom < f64::MIN_POSITIVE {
        return 1.0;
    }
    let v = v_draw(t, e);
    v * v + ((e - t) * n.pdf(e - t) + (e + t) * n.pdf(e + t)) / denom
}

/// Posterior ratings after one game between `a` and `b`.
pub fn update_ratings(a: Rating, b: Rating, outcome: Outcome, params: &TrueSkillParams) -> (Rating, Rating) {
    let (winner, loser, draw, swapped) = match outcome {
        Outcome::AWins => (a, b, false, false),
        Outcome::BWins => (b, a, false, true),
        Outcome::Draw => (a, b, true, false),
    };
    let tau2 = params.tau * params.tau;
    let var_w = winner.sigma * winner.sigma + tau2;
    let var_l = loser.sigma * loser.sigma + tau2;
    let c2 = 2.0 * params.beta * params.beta + var_w + var_l;
    let c = c2.sqrt();
    let t = (winner.mu - loser.mu) / c;
    let e = params.draw_margin() / c;
    let (v, w) = if draw {
        (v_draw(t, e), w_draw(t, e))
    } else {
        (v_win(t, e), w_win(t, e))
    };
    let new_w = Rating {
        mu: winner.mu + var_w / c * v,
        sigma: (var_w * (1.0 - var_w / c2 * w)).sqrt(),
    };
    let new_l = Rating {
        mu: loser.mu - var_l / c * v,
        sigma: (var_l * (1.0 - var_l / c2 * w)).sqrt(),
    };
    if swapped {
        (new_l, new_w)
    } else {
        (new_w, new_l)
    }
}

/// Probability-of-draw style quality of pairing `a` with `b`, in `(0, 1]`.
pub fn match_quality(a: Rating, b: Rating, params: &TrueSkillParams) -> f64 {
    let b2 = 2.0 * params.beta * params.beta;
    let c2 = b2 + (a.sigma * a.sigma + b.sigma * b.sigma);
    let d = a.mu - b.mu;
    (b2 / c2).sqrt() * (-(d * d) / (2.0 * c2)).exp()
}

/// Pair with the highest match quality; ties go to the pair that has met
/// least often, then to the lexicographically smallest pair. The returned
/// pair is in lexicographic order.
pub fn next_pair(
    pool: &[(String, Rating)],
    history: &[MatchRecord],
    params: &TrueSkillParams,
) -> Result<(String, String), ArenaError> {
    let mut ids: Vec<&(String, Rating)> = pool.iter().collect();
    ids.sort_by(|x, y| x.0.cmp(&y.0));
    ids.dedup_by(|x, y| x.0 == y.0);
    if ids.len() < 2 {
        return Err(ArenaError::Validation(format!(
            "need at least 2 generators to pair, have {}",
            ids.len()
        )));
    }
    let meetings = |a: &str, b: &str| {
        history
            .iter()
            .filter(|m| (m.winner == a && m.loser == b) || (m.winner == b && m.loser == a))
            .count()
    };
    let mut best: Option<(f64, usize, &str, &str)> = None;
    for (i, x) in ids.iter().enumerate() {
        for y in &ids[i + 1..] {
            let q = match_quality(x.1, y.1, params);
            let m = meetings(&x.0, &y.0);
            let better = match best {
                None => true,
                Some((bq, bm, _, _)) => {
                    if (q - bq).abs() > 1e-12 {
                        q > bq
                    } else {
                        m < bm
                    }
                }
            };
            if better {
                best = Some((q, m, &x.0, &y.0));
            }
        }
    }
    let (_, _, a, b) = best.expect("at least one pair");
    Ok((a.to_string(), b.to_string()))
}
