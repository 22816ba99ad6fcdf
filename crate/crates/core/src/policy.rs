//! Linear-softmax policy over the joint action space `{Standard, RagSuperior} × cells`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::locatability::Stratum;

/// A sampled answer: reasoning depth plus the index of the predicted geo-cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action {
    pub depth: Stratum,
    pub cell: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyPolicy {
    cells: usize,
    features: usize,
    temperature: f64,
    /// Row-major `(2·cells) × features`; row `depth·cells + cell`.
    weights: Vec<f64>,
}

impl ToyPolicy {
    pub fn zeros(cells: usize, features: usize, temperature: f64) -> Result<Self> {
        if cells == 0 || features == 0 {
            return Err(Error::param("policy shape", "cells and features must be positive"));
        }
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::param("temperature", "must be positive"));
        }
        Ok(Self {
            cells,
            features,
            temperature,
            weights: vec![0.0; 2 * cells * features],
        })
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn num_actions(&self) -> usize {
        2 * self.cells
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn same_shape(&self, other: &ToyPolicy) -> bool {
        self.cells == other.cells && self.features == other.features
    }

    pub fn action_index(&self, a: Action) -> usize {
        a.depth.label() as usize * self.cells + a.cell
    }

    pub fn action_at(&self, index: usize) -> Action {
        let depth = if index >= self.cells {
            Stratum::RagSuperior
        } else {
            Stratum::Standard
        };
        Action {
            depth,
            cell: index % self.cells,
        }
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.features);
        self.weights
            .chunks_exact(self.features)
            .map(|row| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() / self.temperature)
            .collect()
    }

    /// Numerically stable log-softmax; fails on non-finite logits.
    pub fn log_probs(&self, x: &[f64]) -> Result<Vec<f64>> {
        let z = self.logits(x);
        if let Some(bad) = z.iter().find(|v| !v.is_finite()) {
            return Err(Error::numeric("policy logits", format!("non-finite logit {bad}")));
        }
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        Ok(z.into_iter().map(|v| v - lse).collect())
    }

    pub fn probs(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.log_probs(x)?.into_iter().map(f64::exp).collect())
    }

    /// Marginal probability of choosing deep reasoning.
    pub fn deep_probability(&self, x: &[f64]) -> Result<f64> {
        Ok(self.probs(x)?[self.cells..].iter().sum())
    }

    /// Depth by marginal majority, cell by marginal argmax.
    pub fn greedy(&self, x: &[f64]) -> Result<Action> {
        let p = self.probs(x)?;
        let deep: f64 = p[self.cells..].iter().sum();
        let cell = (0..self.cells)
            .map(|c| (c, p[c] + p[self.cells + c]))
            .fold(
                (0, f64::NEG_INFINITY),
                |best, cur| if cur.1 > best.1 { cur } else { best },
            )
            .0;
        Ok(Action {
            depth: if deep > 0.5 {
                Stratum::RagSuperior
            } else {
                Stratum::Standard
            },
            cell,
        })
    }

    /// Plain-text dump: a header line followed by one row of weights per action.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "# toy-policy cells={} features={} temperature={}\n",
            self.cells, self.features, self.temperature
        );
        for row in self.weights.chunks_exact(self.features) {
            let line: Vec<String> = row.iter().map(|w| format!("{w:e}")).collect();
            writeln!(out, "{}", line.join(" ")).unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or(Error::Parse {
            line: 1,
            reason: "empty policy file".into(),
        })?;
        let field = |key: &str| -> Result<&str> {
            header
                .split_whitespace()
                .find_map(|kv| kv.strip_prefix(key).and_then(|v| v.strip_prefix('=')))
                .ok_or_else(|| Error::Parse {
                    line: 1,
                    reason: format!("missing `{key}`"),
                })
        };
        let bad = |line: usize, reason: String| Error::Parse { line, reason };
        let cells: usize = field("cells")?.parse().map_err(|e| bad(1, format!("cells: {e}")))?;
        let features: usize = field("features")?
            .parse()
            .map_err(|e| bad(1, format!("features: {e}")))?;
        let temperature: f64 = field("temperature")?
            .parse()
            .map_err(|e| bad(1, format!("temperature: {e}")))?;
        let mut policy = Self::zeros(cells, features, temperature)?;
        let mut rows = 0;
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            if rows >= policy.num_actions() {
                return Err(bad(i + 2, "too many rows".into()));
            }
            let values: Vec<f64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| bad(i + 2, format!("{e}")))?;
            if values.len() != features {
                return Err(bad(i + 2, format!("expected {features} values, got {}", values.len())));
            }
            policy.weights[rows * features..(rows + 1) * features].copy_from_slice(&values);
            rows += 1;
        }
        if rows != policy.num_actions() {
            return Err(bad(
                rows + 2,
                format!("expected {} rows, got {rows}", policy.num_actions()),
            ));
        }
        Ok(policy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn action_indexing_round_trips() {
        let p = ToyPolicy::zeros(4, 3, 1.0).unwrap();
        for i in 0..p.num_actions() {
            assert_eq!(p.action_index(p.action_at(i)), i);
        }
        assert_eq!(
            p.action_at(5),
            Action {
                depth: Stratum::RagSuperior,
                cell: 1
            }
        );
    }

    #[test]
    fn uniform_at_zero() {
        let p = ToyPolicy::zeros(4, 3, 1.0).unwrap();
        let probs = p.probs(&[1.0, -2.0, 0.5]).unwrap();
        assert!(probs.iter().all(|v| (v - 0.125).abs() < 1e-15));
        assert!((p.deep_probability(&[1.0, 0.0, 0.0]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn non_finite_logits_fail() {
        let mut p = ToyPolicy::zeros(2, 2, 1.0).unwrap();
        p.weights_mut()[0] = f64::INFINITY;
        assert!(matches!(p.log_probs(&[1.0, 0.0]), Err(Error::Numeric { .. })));
    }

    #[test]
    fn text_dump_round_trips() {
        let mut p = ToyPolicy::zeros(2, 3, 0.5).unwrap();
        for (i, w) in p.weights_mut().iter_mut().enumerate() {
            *w = (i as f64 * 0.37).sin() / 3.0;
        }
        let text = p.to_text();
        assert!(text.starts_with("# toy-policy cells=2 features=3 temperature=0.5\n"));
        assert_eq!(ToyPolicy::from_text(&text).unwrap(), p);
        assert!(ToyPolicy::from_text("# toy-policy cells=2 features=3 temperature=1\n0 0 0\n").is_err());
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one(w in proptest::collection::vec(-30.0..30.0f64, 24), x in proptest::collection::vec(-3.0..3.0f64, 3), t in 0.05..5.0f64) {
            let mut p = ToyPolicy::zeros(4, 3, t).unwrap();
            p.weights_mut().copy_from_slice(&w);
            let total: f64 = p.probs(&x).unwrap().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
        }
    }
}
