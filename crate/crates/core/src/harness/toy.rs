use rand::Rng;

use super::config::{ToyKind, ToyProblemConfig};
use super::grid::rng_stream;
use super::output::CsvTable;
use crate::approximator::ParamVector;
use crate::error::Result;
use crate::evalstats::format_real;
use crate::optim::{adam_step, AdamState};

/// One row per step: the gradient used at that step and the weights after it.
/// Row 0 holds the starting point with a zero gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyRow {
    pub step: u64,
    pub w: (f64, f64),
    pub g: (f64, f64),
}

/// Gradient of the two-parameter problem at `w`. The y-component is always
/// `0.1 * w_y`; the x-component is noisy or sparse depending on `kind`.
pub fn toy_gradient<R: Rng>(kind: ToyKind, w: (f64, f64), rng: &mut R) -> (f64, f64) {
    let gx = match kind {
        ToyKind::Noisy => {
            if rng.gen::<bool>() {
                0.1 * w.0
            } else {
                -0.1 * w.0
            }
        }
        ToyKind::Sparse => {
            if rng.gen::<f64>() < 0.05 {
                0.1 * w.0
            } else {
                0.0
            }
        }
    };
    (gx, 0.1 * w.1)
}

/// Runs Adam on the toy problem and returns the full trajectory.
pub fn run_toy(config: &ToyProblemConfig) -> Result<Vec<ToyRow>> {
    config.validate()?;
    let mut rng = rng_stream(config.seed, 0);
    let mut state = AdamState::new(2, config.adam)?;
    let mut w = ParamVector::from_vec(vec![config.w0.0, config.w0.1]);
    let mut rows = Vec::with_capacity(config.steps as usize + 1);
    rows.push(ToyRow {
        step: 0,
        w: config.w0,
        g: (0.0, 0.0),
    });
    for step in 1..=config.steps {
        let g = toy_gradient(config.kind, (w[0], w[1]), &mut rng);
        adam_step(&mut state, &mut w, &ParamVector::from_vec(vec![g.0, g.1]), config.lr)?;
        rows.push(ToyRow {
            step,
            w: (w[0], w[1]),
            g,
        });
    }
    Ok(rows)
}

pub const TOY_HEADER: [&str; 5] = ["step", "w_x", "w_y", "g_x", "g_y"];

pub fn toy_table(rows: &[ToyRow]) -> CsvTable {
    let mut t = CsvTable::new(&TOY_HEADER);
    for r in rows {
        t.push(vec![
            r.step.to_string(),
            format_real(r.w.0),
            format_real(r.w.1),
            format_real(r.g.0),
            format_real(r.g.1),
        ]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_step_size_stays_put() {
        let c = ToyProblemConfig {
            lr: 0.0,
            steps: 100,
            ..Default::default()
        };
        let rows = run_toy(&c).unwrap();
        assert_eq!(rows.len(), 101);
        assert!(rows.iter().all(|r| r.w == (1.5, 1.5)));
    }

    #[test]
    fn gradients_follow_the_kind() {
        let mut rng = rng_stream(0, 0);
        for _ in 0..100 {
            let (gx, gy) = toy_gradient(ToyKind::Noisy, (2.0, 3.0), &mut rng);
            assert!(gx == 0.2 || gx == -0.2);
            assert!((gy - 0.3).abs() < 1e-15);
        }
        let nonzero = (0..10_000)
            .filter(|_| toy_gradient(ToyKind::Sparse, (1.0, 1.0), &mut rng).0 != 0.0)
            .count();
        assert!((400..600).contains(&nonzero), "{nonzero}");
    }

    #[test]
    fn trajectory_is_seeded() {
        let c = ToyProblemConfig {
            steps: 50,
            seed: 4,
            ..Default::default()
        };
        assert_eq!(run_toy(&c).unwrap(), run_toy(&c).unwrap());
    }
}
