//! The annealed baseline: tree and percolation averaged jointly.
//!
//! Generating a Galton-Watson tree and percolating it at `p_c`
//! simultaneously is the same as running a critical branching process with
//! offspring `Bin(Z, p_c)`. Its survival probability iterates through the
//! generating function exactly, giving Kolmogorov's estimate
//! `n q_n -> lambda`; conditioned on survival, `Z_n / n` tends to an
//! exponential law with mean `1/lambda` (Yaglom). These exact curves double
//! as tail boundary values for the deep quenched sweeps.

use crate::error::{Error, Result};
use crate::offspring::{CriticalParams, OffspringSpec};
use crate::rng::{stream, SplitMix64};
use rayon::prelude::*;

/// Runaway guard for the critical branching simulation; the process dies
/// almost surely, but a guard costs nothing.
pub const DEFAULT_POP_CAP: u64 = 1_000_000_000;

pub const DEFAULT_MAX_ATTEMPTS: u64 = 1_000_000_000;

/// Exact survival probabilities `q[n] = P[Bin(Z, pc) process alive at n]`
/// for `n <= n_max`, by iterating `q_n = 1 - f(1 - q_{n-1})` with
/// `f(s) = phi(1 - pc + pc s)`, i.e. `q_n = 1 - phi(1 - pc q_{n-1})`.
pub fn annealed_survival_exact(spec: &OffspringSpec, n_max: usize) -> Vec<f64> {
    let pc = spec.pc();
    let mut q = Vec::with_capacity(n_max + 1);
    q.push(1.0);
    for _ in 1..=n_max {
        let prev = *q.last().unwrap();
        q.push(1.0 - spec.pgf(1.0 - pc * prev));
    }
    q
}

/// Factorial moments `b[n][i] = E[binom(|Y_n|, i)]` of the annealed process,
/// `i <= k_max`, `n <= n_max`.
///
/// Uses the corrected-moment identity: the quenched statistic
/// `E_T[binom(|Y_n|,k)] - sum_i c_{k,i} sum_{j<n} E_T[binom(|Y_j|,i)]`
/// has constant expectation `binom(1,k)`, so the annealed moments satisfy
/// the same recursion with that constant.
pub fn annealed_factorial_moments(
    params: &CriticalParams,
    n_max: usize,
    k_max: usize,
) -> Result<Vec<Vec<f64>>> {
    if k_max > params.k_max() {
        return Err(Error::InvalidInput(format!(
            "k_max {k_max} exceeds derived table order {}",
            params.k_max()
        )));
    }
    let mut b = vec![vec![0.0; k_max + 1]; n_max + 1];
    // Running column sums `sum_{j < n} b[j][i]`.
    let mut col = vec![0.0; k_max + 1];
    for n in 0..=n_max {
        b[n][0] = 1.0;
        if k_max >= 1 {
            b[n][1] = 1.0;
        }
        for i in 2..=k_max {
            let mut acc = 0.0;
            for l in 1..i {
                acc += params.comp_coeff(i, l) * col[l];
            }
            b[n][i] = acc;
        }
        for i in 0..=k_max {
            col[i] += b[n][i];
        }
    }
    Ok(b)
}

/// Conditioned sample from the critical branching process.
#[derive(Clone, Debug)]
pub struct BranchingConditioned {
    pub n: usize,
    /// Level-`n` population of each accepted (surviving) replicate.
    pub sizes: Vec<u64>,
    pub attempts: u64,
    pub acceptance_rate: f64,
}

/// Simulates `Bin(Z, pc)` level by level to depth `n`, conditioned on
/// survival by rejection. Replicate `r` reads only
/// `stream(seed, "ann-yaglom", r)`, so the run is deterministic and
/// parallelizes freely.
pub fn annealed_yaglom(
    spec: &OffspringSpec,
    n: usize,
    num_accepted: usize,
    seed: u64,
    max_attempts: u64,
) -> Result<BranchingConditioned> {
    let pc = spec.pc();
    let chunk = 4096u64;
    let mut sizes = Vec::with_capacity(num_accepted);
    let mut attempts = 0u64;
    let mut start = 0u64;
    'outer: while sizes.len() < num_accepted {
        if start >= max_attempts {
            return Err(Error::AttemptCap {
                cap: max_attempts,
                got: sizes.len() as u64,
                want: num_accepted as u64,
            });
        }
        let hi = (start + chunk).min(max_attempts);
        let batch: Result<Vec<u64>> = (start..hi)
            .into_par_iter()
            .map(|r| {
                let mut rng = stream(seed, "ann-yaglom", r);
                simulate_critical_levels(spec, pc, n, &mut rng, DEFAULT_POP_CAP)
            })
            .collect();
        for (i, &z) in batch?.iter().enumerate() {
            if z > 0 {
                sizes.push(z);
                if sizes.len() == num_accepted {
                    attempts = start + i as u64 + 1;
                    break 'outer;
                }
            }
        }
        attempts = hi;
        start = hi;
    }
    let acceptance_rate = sizes.len() as f64 / attempts as f64;
    Ok(BranchingConditioned {
        n,
        sizes,
        attempts,
        acceptance_rate,
    })
}

/// Annealed cluster sizes at depth `n`: a fresh implicit tree per replicate,
/// one spine sample on each — tree and percolation varied together.
pub fn annealed_iic_sizes(
    spec: &OffspringSpec,
    n: usize,
    lookahead: usize,
    replicates: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    (0..replicates as u64)
        .into_par_iter()
        .map(|r| {
            let tree_seed = stream(seed, "ann-iic-tree", r).next_u64();
            let dt = crate::deep::DeepTree::new(spec.clone(), tree_seed);
            let mut rng = stream(seed, "ann-iic", r);
            crate::iic::sample_iic_deep(&dt, n, lookahead, &mut rng)
                .map(|s| s.c_n as f64 / n as f64)
        })
        .collect()
}

fn simulate_critical_levels(
    spec: &OffspringSpec,
    pc: f64,
    n: usize,
    rng: &mut SplitMix64,
    pop_cap: u64,
) -> Result<u64> {
    let mut pop = 1u64;
    for _ in 0..n {
        let mut next = 0u64;
        for _ in 0..pop {
            let z = spec.sample(rng);
            for _ in 0..z {
                if rng.next_f64() < pc {
                    next += 1;
                }
            }
        }
        if next == 0 {
            return Ok(0);
        }
        if next > pop_cap {
            return Err(Error::PopulationCap(pop_cap));
        }
        pop = next;
    }
    Ok(pop)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(s: &str) -> OffspringSpec {
        s.parse().unwrap()
    }

    #[test]
    fn det2_hand_iteration() {
        let q = annealed_survival_exact(&spec("det:2"), 2);
        assert!((q[0] - 1.0).abs() < 1e-15);
        assert!((q[1] - 0.75).abs() < 1e-15);
        assert!((q[2] - 39.0 / 64.0).abs() < 1e-15);
    }

    #[test]
    fn kolmogorov_limit_det2_and_unif13() {
        let n = 10_000;
        let q = annealed_survival_exact(&spec("det:2"), n);
        assert!((n as f64 * q[n] / 4.0 - 1.0).abs() < 0.02);
        let q = annealed_survival_exact(&spec("unif:1:3"), n);
        assert!((n as f64 * q[n] / 3.0 - 1.0).abs() < 0.02);
    }

    // lambda has closed forms for each family:
    //   geom:q -> 1/(1-q); poisplus:t -> 2/(1-e^{-t}); pmf hand-computed.
    #[test]
    fn kolmogorov_limit_matches_hand_lambda() {
        let n = 10_000;
        let cases = [
            ("geom:0.5", 2.0),
            ("poisplus:1", 2.0 / (1.0 - (-1.0f64).exp())),
            ("pmf:0.5,0.5", 4.5),
        ];
        for (s, lambda) in cases {
            let sp = spec(s);
            let derived = sp.derive_params(2).unwrap().lambda;
            assert!((derived - lambda).abs() < 1e-9, "{s}: {derived} vs {lambda}");
            let q = annealed_survival_exact(&sp, n);
            assert!(
                (n as f64 * q[n] / lambda - 1.0).abs() < 0.02,
                "{s}: n*q = {}",
                n as f64 * q[n]
            );
        }
    }

    #[test]
    fn survival_is_strictly_decreasing_and_positive() {
        for s in ["det:2", "unif:1:3", "geom:0.3", "poisplus:2"] {
            let q = annealed_survival_exact(&spec(s), 2000);
            for n in 1..q.len() {
                assert!(q[n] > 0.0, "{s} at {n}");
                assert!(q[n] < q[n - 1], "{s} at {n}");
            }
        }
    }

    #[test]
    fn factorial_moments_low_orders() {
        let sp = spec("det:2");
        let params = sp.derive_params(4).unwrap();
        let b = annealed_factorial_moments(&params, 10, 3).unwrap();
        for (n, row) in b.iter().enumerate() {
            assert!((row[1] - 1.0).abs() < 1e-14);
            // b_2(n) = n * pc^2 * m_2.
            let expect = n as f64 * 0.25;
            assert!((row[2] - expect).abs() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn yaglom_acceptance_matches_exact_curve() {
        let sp = spec("det:2");
        let n = 32;
        let out = annealed_yaglom(&sp, n, 2000, 11, DEFAULT_MAX_ATTEMPTS).unwrap();
        let q = annealed_survival_exact(&sp, n)[n];
        let se = (q * (1.0 - q) / out.attempts as f64).sqrt();
        assert!(
            (out.acceptance_rate - q).abs() < 3.0 * se,
            "rate {} vs exact {q}",
            out.acceptance_rate
        );
        assert!(out.sizes.iter().all(|&s| s > 0));
    }

    #[test]
    fn yaglom_mean_near_inverse_lambda() {
        let sp = spec("det:2");
        let n = 128;
        let out = annealed_yaglom(&sp, n, 3000, 5, DEFAULT_MAX_ATTEMPTS).unwrap();
        let mean: f64 =
            out.sizes.iter().map(|&s| s as f64 / n as f64).sum::<f64>() / out.sizes.len() as f64;
        // Exponential limit with mean 1/lambda = 1/4; allow finite-n slack.
        assert!((mean - 0.25).abs() < 0.03, "mean {mean}");
    }

    #[test]
    fn attempt_cap_is_reported() {
        let err = annealed_yaglom(&spec("det:2"), 64, 10_000, 3, 50).unwrap_err();
        assert!(matches!(err, Error::AttemptCap { cap: 50, .. }));
    }
}
