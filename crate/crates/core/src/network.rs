//! Seeded lossy links.
//!
//! Every link draws from its own ChaCha8 stream. The key is the run seed and
//! the stream id is the link direction, so the two directions of a run are
//! independent and a run's bit sequences do not depend on anything but its
//! seed and loss parameters. ChaCha8 is portable and fully specified, which
//! keeps sequences identical across platforms.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Loss model of one link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossProcess {
    /// Independent drops with probability `rho`.
    Bernoulli { rho: f64 },
    /// Fixed delivery bits, repeated cyclically.
    Scripted { bits: Vec<u8> },
    /// Two-state Markov channel with per-state drop probabilities.
    GilbertElliott {
        p_good_to_bad: f64,
        p_bad_to_good: f64,
        rho_good: f64,
        rho_bad: f64,
    },
}

impl LossProcess {
    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, v: f64, closed: bool| {
            let ok = if closed {
                (0.0..=1.0).contains(&v)
            } else {
                (0.0..1.0).contains(&v)
            };
            if ok {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} = {v} is outside its range")))
            }
        };
        match self {
            LossProcess::Bernoulli { rho } => prob("rho", *rho, false),
            LossProcess::Scripted { bits } => {
                if bits.is_empty() || bits.iter().any(|b| *b > 1) {
                    return Err(Error::Config("scripted loss needs a nonempty 0/1 sequence".into()));
                }
                Ok(())
            }
            LossProcess::GilbertElliott {
                p_good_to_bad,
                p_bad_to_good,
                rho_good,
                rho_bad,
            } => {
                prob("p_good_to_bad", *p_good_to_bad, true)?;
                prob("p_bad_to_good", *p_bad_to_good, true)?;
                prob("rho_good", *rho_good, false)?;
                prob("rho_bad", *rho_bad, true)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Controller to plant, bits `θ_k`.
    ToPlant,
    /// Plant to controller, bits `γ_k`.
    ToController,
}

impl Direction {
    fn stream(self) -> u64 {
        match self {
            Direction::ToPlant => 1,
            Direction::ToController => 2,
        }
    }
}

/// Stream id reserved for the plant disturbance of a run.
pub const DISTURBANCE_STREAM: u64 = 3;

/// One direction of the network.
#[derive(Debug, Clone)]
pub struct Link {
    loss: LossProcess,
    direction: Direction,
    rng: ChaCha8Rng,
    bad_state: bool,
    draws: usize,
    last_k: Option<i64>,
    log: Vec<(i64, bool)>,
}

impl Link {
    pub fn new(loss: LossProcess, direction: Direction, run_seed: u64) -> Result<Self> {
        loss.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
        rng.set_stream(direction.stream());
        Ok(Link {
            loss,
            direction,
            rng,
            bad_state: false,
            draws: 0,
            last_k: None,
            log: Vec::new(),
        })
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    /// Delivery bit for step `k`. Consumes exactly one sample.
    pub fn transmit(&mut self, k: i64) -> Result<bool> {
        if let Some(last) = self.last_k {
            if k != last + 1 {
                return Err(Error::Protocol(format!(
                    "{:?} link used at step {k} after step {last}",
                    self.direction
                )));
            }
        }
        let sample = self.rng.next_u64();
        let delivered = match &self.loss {
            LossProcess::Bernoulli { rho } => unit(sample) >= *rho,
            LossProcess::Scripted { bits } => bits[self.draws % bits.len()] == 1,
            LossProcess::GilbertElliott {
                p_good_to_bad,
                p_bad_to_good,
                rho_good,
                rho_bad,
            } => {
                // High half decides delivery, low half the state transition.
                let drop = unit32((sample >> 32) as u32);
                let flip = unit32(sample as u32);
                let rho = if self.bad_state { *rho_bad } else { *rho_good };
                let delivered = drop >= rho;
                let p = if self.bad_state { *p_bad_to_good } else { *p_good_to_bad };
                if flip < p {
                    self.bad_state = !self.bad_state;
                }
                delivered
            }
        };
        self.draws += 1;
        self.last_k = Some(k);
        self.log.push((k, delivered));
        Ok(delivered)
    }

    /// Consume the step-`k` sample but deliver regardless.
    pub fn transmit_forced(&mut self, k: i64) -> Result<bool> {
        self.transmit(k)?;
        if let Some(last) = self.log.last_mut() {
            last.1 = true;
        }
        Ok(true)
    }

    pub fn log(&self) -> &[(i64, bool)] {
        &self.log
    }
}

fn unit(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn unit32(x: u32) -> f64 {
    x as f64 * (1.0 / (1u64 << 32) as f64)
}

/// Seed of repetition `rep` at loss-level index `rho_index`.
pub fn run_seed(master: u64, rho_index: usize, rep: usize) -> u64 {
    let mut h = splitmix64(master);
    h = splitmix64(h ^ rho_index as u64);
    splitmix64(h ^ ((rep as u64) << 32 | 0x5bd1))
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Diagnostics on the two-consecutive-successes condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assumption1Report {
    /// Longest stretch of steps `t` with `γ_{t−1}·θ_t = 0`.
    pub longest_bad_run: usize,
    /// Number of steps with `γ_{t−1} = θ_t = 1`.
    pub good_events: usize,
}

/// Scan aligned `θ` and `γ` logs. `γ_{−1}` is taken as delivered, matching
/// the initial exchange.
pub fn assumption1_monitor(theta: &[bool], gamma: &[bool]) -> Assumption1Report {
    let mut longest = 0;
    let mut current = 0;
    let mut good = 0;
    for t in 0..theta.len() {
        let prev = if t == 0 {
            true
        } else {
            gamma.get(t - 1).copied().unwrap_or(false)
        };
        if prev && theta[t] {
            good += 1;
            current = 0;
        } else {
            current += 1;
            longest = longest.max(current);
        }
    }
    Assumption1Report {
        longest_bad_run: longest,
        good_events: good,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bits(link: &mut Link, n: usize) -> Vec<bool> {
        (0..n as i64).map(|k| link.transmit(k).unwrap()).collect()
    }

    #[test]
    fn lossless_link_always_delivers() {
        let mut link = Link::new(LossProcess::Bernoulli { rho: 0.0 }, Direction::ToPlant, 7).unwrap();
        assert!(bits(&mut link, 1000).iter().all(|b| *b));
    }

    #[test]
    fn scripted_link_repeats() {
        let mut link = Link::new(LossProcess::Scripted { bits: vec![1, 0] }, Direction::ToPlant, 0).unwrap();
        assert_eq!(bits(&mut link, 5), vec![true, false, true, false, true]);
    }

    #[test]
    fn delivery_rate_matches_probability() {
        let mut link = Link::new(LossProcess::Bernoulli { rho: 0.5 }, Direction::ToController, 42).unwrap();
        let n = 100_000;
        let rate = bits(&mut link, n).iter().filter(|b| **b).count() as f64 / n as f64;
        assert!((rate - 0.5).abs() < 0.01, "rate {rate}");
    }

    #[test]
    fn steps_must_advance_by_one() {
        let mut link = Link::new(LossProcess::Bernoulli { rho: 0.1 }, Direction::ToPlant, 1).unwrap();
        link.transmit(0).unwrap();
        assert!(link.transmit(0).is_err());
        assert!(link.transmit(2).is_err());
        assert!(link.transmit(1).is_ok());
        assert_eq!(link.log().len(), 2);
    }

    #[test]
    fn forced_delivery_keeps_stream_alignment() {
        let loss = LossProcess::Bernoulli { rho: 0.6 };
        let mut a = Link::new(loss.clone(), Direction::ToPlant, 9).unwrap();
        let mut b = Link::new(loss, Direction::ToPlant, 9).unwrap();
        assert!(a.transmit_forced(0).unwrap());
        b.transmit(0).unwrap();
        let ta: Vec<_> = (1..200).map(|k| a.transmit(k).unwrap()).collect();
        let tb: Vec<_> = (1..200).map(|k| b.transmit(k).unwrap()).collect();
        assert_eq!(ta, tb);
    }

    #[test]
    fn directions_are_independent() {
        // 2×2 contingency table of (θ_k, γ_k) and a chi-square test with one
        // degree of freedom at the 0.1% level.
        let loss = LossProcess::Bernoulli { rho: 0.3 };
        let mut f = Link::new(loss.clone(), Direction::ToPlant, 5).unwrap();
        let mut r = Link::new(loss, Direction::ToController, 5).unwrap();
        let n = 50_000;
        let mut table = [[0f64; 2]; 2];
        for k in 0..n {
            let a = f.transmit(k).unwrap() as usize;
            let b = r.transmit(k).unwrap() as usize;
            table[a][b] += 1.0;
        }
        let total = n as f64;
        let rows = [table[0][0] + table[0][1], table[1][0] + table[1][1]];
        let cols = [table[0][0] + table[1][0], table[0][1] + table[1][1]];
        let mut chi2 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                let e = rows[i] * cols[j] / total;
                chi2 += (table[i][j] - e).powi(2) / e;
            }
        }
        assert!(chi2 < 10.83, "chi2 {chi2}");
    }

    #[test]
    fn gilbert_elliott_is_burstier_than_bernoulli() {
        let ge = LossProcess::GilbertElliott {
            p_good_to_bad: 0.05,
            p_bad_to_good: 0.2,
            rho_good: 0.0,
            rho_bad: 1.0,
        };
        let mut link = Link::new(ge, Direction::ToPlant, 3).unwrap();
        let b = bits(&mut link, 20_000);
        let losses = b.iter().filter(|x| !**x).count();
        // Stationary bad probability 0.05 / 0.25 = 0.2.
        let rate = losses as f64 / b.len() as f64;
        assert!((rate - 0.2).abs() < 0.03, "loss rate {rate}");
        let mut longest = 0;
        let mut cur = 0;
        for x in &b {
            cur = if *x { 0 } else { cur + 1 };
            longest = longest.max(cur);
        }
        assert!(longest >= 15);
    }

    #[test]
    fn monitor_examples() {
        let ok = vec![true; 50];
        let r = assumption1_monitor(&ok, &ok);
        assert_eq!(r.longest_bad_run, 0);
        assert_eq!(r.good_events, 50);
        let lost = vec![false; 30];
        let r = assumption1_monitor(&lost, &lost);
        assert_eq!(r.longest_bad_run, 30);
        assert_eq!(r.good_events, 0);
    }

    #[test]
    fn heavy_loss_still_has_good_events() {
        for seed in 0..20 {
            let loss = LossProcess::Bernoulli { rho: 0.9 };
            let mut f = Link::new(loss.clone(), Direction::ToPlant, seed).unwrap();
            let mut r = Link::new(loss, Direction::ToController, seed).unwrap();
            let t = bits(&mut f, 10_000);
            let g = bits(&mut r, 10_000);
            assert!(assumption1_monitor(&t, &g).good_events > 0);
        }
    }

    #[test]
    fn invalid_processes_rejected() {
        assert!(LossProcess::Bernoulli { rho: 1.0 }.validate().is_err());
        assert!(LossProcess::Scripted { bits: vec![] }.validate().is_err());
        assert!(LossProcess::Scripted { bits: vec![2] }.validate().is_err());
    }

    proptest! {
        #[test]
        fn same_seed_same_bits(seed in any::<u64>(), rho in 0.0f64..0.99) {
            let loss = LossProcess::Bernoulli { rho };
            let mut a = Link::new(loss.clone(), Direction::ToPlant, seed).unwrap();
            let mut b = Link::new(loss, Direction::ToPlant, seed).unwrap();
            prop_assert_eq!(bits(&mut a, 64), bits(&mut b, 64));
        }

        #[test]
        fn run_seeds_differ(master in any::<u64>(), i in 0usize..10, j in 0usize..20) {
            prop_assert_ne!(run_seed(master, i, j), run_seed(master, i, j + 1));
            prop_assert_ne!(run_seed(master, i, j), run_seed(master, i + 1, j));
        }
    }
}
