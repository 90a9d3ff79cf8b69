//! The six word-level comparison functions.
//!
//! Each one matches a contextual word vector against its attention
//! counterpart, column by column. They differ in how much structure they
//! impose: `nn`/`ntn` are free-form learned layers, `euccos` collapses
//! each pair to a distance and a cosine, and `sub`/`mult` keep the
//! element-wise middle ground (no parameters at all). `submult-nn`
//! combines the last two behind a learned ReLU layer.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::glorot_matrix;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Which comparison strategy to plug into the matching model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ComparisonKind {
    #[serde(rename = "nn")]
    Nn,
    #[serde(rename = "ntn")]
    Ntn,
    #[serde(rename = "euccos")]
    EucCos,
    #[serde(rename = "sub")]
    Sub,
    #[serde(rename = "mult")]
    Mult,
    #[serde(rename = "submult-nn")]
    SubMultNn,
}

/// All six kinds, in their conventional reporting order.
pub const ALL_KINDS: [ComparisonKind; 6] = [
    ComparisonKind::Nn,
    ComparisonKind::Ntn,
    ComparisonKind::EucCos,
    ComparisonKind::Sub,
    ComparisonKind::Mult,
    ComparisonKind::SubMultNn,
];

impl ComparisonKind {
    pub fn name(&self) -> &'static str {
        match self {
            ComparisonKind::Nn => "nn",
            ComparisonKind::Ntn => "ntn",
            ComparisonKind::EucCos => "euccos",
            ComparisonKind::Sub => "sub",
            ComparisonKind::Mult => "mult",
            ComparisonKind::SubMultNn => "submult-nn",
        }
    }

    /// Rows of the comparison output: 2 for `euccos`, the hidden
    /// dimension for everything else.
    pub fn output_dim(&self, hidden: usize) -> usize {
        match self {
            ComparisonKind::EucCos => 2,
            _ => hidden,
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(
            self,
            ComparisonKind::Nn | ComparisonKind::Ntn | ComparisonKind::SubMultNn
        )
    }
}

impl fmt::Display for ComparisonKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ComparisonKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nn" => Ok(ComparisonKind::Nn),
            "ntn" => Ok(ComparisonKind::Ntn),
            "euccos" => Ok(ComparisonKind::EucCos),
            "sub" => Ok(ComparisonKind::Sub),
            "mult" => Ok(ComparisonKind::Mult),
            "submult-nn" => Ok(ComparisonKind::SubMultNn),
            other => Err(Error::Config(format!(
                "unknown comparison function {other:?} (expected one of nn, ntn, euccos, sub, mult, submult-nn)"
            ))),
        }
    }
}

/// Learned weights for the comparison layer; `sub`, `mult` and `euccos`
/// carry none.
#[derive(Clone, Debug, PartialEq)]
pub enum ComparisonParams {
    None,
    /// `w` is `l x 2l`, `b` is `l`; used by `nn` and `submult-nn`.
    Affine { w: Tensor, b: Tensor },
    /// `t` is `l x l x l`, `b` is `l`; used by `ntn`.
    Bilinear { t: Tensor, b: Tensor },
}

impl ComparisonParams {
    pub fn init<R: Rng>(kind: ComparisonKind, hidden: usize, rng: &mut R) -> Self {
        match kind {
            ComparisonKind::Nn | ComparisonKind::SubMultNn => ComparisonParams::Affine {
                w: glorot_matrix(hidden, 2 * hidden, rng),
                b: Tensor::zeros(&[hidden]),
            },
            ComparisonKind::Ntn => {
                let limit = (6.0 / (2 * hidden) as f64).sqrt();
                ComparisonParams::Bilinear {
                    t: Tensor::random_uniform(&[hidden, hidden, hidden], -limit, limit, rng),
                    b: Tensor::zeros(&[hidden]),
                }
            }
            _ => ComparisonParams::None,
        }
    }

    pub fn matches(&self, kind: ComparisonKind) -> bool {
        match (self, kind) {
            (ComparisonParams::Affine { .. }, ComparisonKind::Nn)
            | (ComparisonParams::Affine { .. }, ComparisonKind::SubMultNn)
            | (ComparisonParams::Bilinear { .. }, ComparisonKind::Ntn) => true,
            (ComparisonParams::None, k) => !k.has_params(),
            _ => false,
        }
    }

    pub fn bind(&self, tape: &mut Tape) -> ComparisonVars {
        match self {
            ComparisonParams::None => ComparisonVars::None,
            ComparisonParams::Affine { w, b } => ComparisonVars::Affine {
                w: tape.param("cmp.w", w),
                b: tape.param("cmp.b", b),
            },
            ComparisonParams::Bilinear { t, b } => ComparisonVars::Bilinear {
                t: tape.param("cmp.t", t),
                b: tape.param("cmp.b", b),
            },
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub enum ComparisonVars {
    None,
    Affine { w: Var, b: Var },
    Bilinear { t: Var, b: Var },
}

/// Apply the comparison function column-wise to `abar` and `h` (both
/// `l x A`), producing the comparison matrix (`output_dim x A`).
pub fn compare(
    tape: &mut Tape,
    kind: ComparisonKind,
    vars: &ComparisonVars,
    abar: Var,
    h: Var,
) -> Result<Var> {
    let (av, hv) = (tape.value(abar), tape.value(h));
    if !av.is_matrix() || av.shape() != hv.shape() {
        return Err(Error::Dimension(format!(
            "compare over {} and {}",
            av.shape_string(),
            hv.shape_string()
        )));
    }
    match (kind, vars) {
        (ComparisonKind::Nn, ComparisonVars::Affine { w, b }) => {
            let joined = tape.concat_rows(abar, h)?;
            let lin = tape.matmul(*w, joined)?;
            let lin = tape.add_broadcast(lin, *b)?;
            Ok(tape.relu(lin))
        }
        (ComparisonKind::Ntn, ComparisonVars::Bilinear { t, b }) => {
            let forms = tape.ntn_bilinear(*t, abar, h)?;
            let forms = tape.add_broadcast(forms, *b)?;
            Ok(tape.relu(forms))
        }
        (ComparisonKind::EucCos, ComparisonVars::None) => tape.euccos(abar, h),
        (ComparisonKind::Sub, ComparisonVars::None) => {
            let diff = tape.sub(abar, h)?;
            tape.mul(diff, diff)
        }
        (ComparisonKind::Mult, ComparisonVars::None) => tape.mul(abar, h),
        (ComparisonKind::SubMultNn, ComparisonVars::Affine { w, b }) => {
            let diff = tape.sub(abar, h)?;
            let sub = tape.mul(diff, diff)?;
            let mult = tape.mul(abar, h)?;
            let joined = tape.concat_rows(sub, mult)?;
            let lin = tape.matmul(*w, joined)?;
            let lin = tape.add_broadcast(lin, *b)?;
            Ok(tape.relu(lin))
        }
        _ => Err(Error::Config(format!(
            "comparison parameters do not match kind {kind}"
        ))),
    }
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)] // scalar oracles index on purpose
mod tests {
    use super::*;
    use crate::gradcheck::{check_gradients, DEFAULT_STEP};
    use crate::layers::glorot_vector;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn rand_pair(l: usize, a: usize, seed: u64) -> (Tensor, Tensor) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        (
            Tensor::random_uniform(&[l, a], -1.0, 1.0, &mut rng),
            Tensor::random_uniform(&[l, a], -1.0, 1.0, &mut rng),
        )
    }

    fn run(
        kind: ComparisonKind,
        params: &ComparisonParams,
        abar: &Tensor,
        h: &Tensor,
    ) -> Tensor {
        let mut tape = Tape::new();
        let vars = params.bind(&mut tape);
        let a = tape.constant(abar.clone());
        let hh = tape.constant(h.clone());
        let out = compare(&mut tape, kind, &vars, a, hh).unwrap();
        tape.value(out).clone()
    }

    /// Scalar re-computation of every kind, used as the oracle.
    fn scalar_oracle(
        kind: ComparisonKind,
        params: &ComparisonParams,
        a_col: &[f64],
        h_col: &[f64],
    ) -> Vec<f64> {
        let l = a_col.len();
        match (kind, params) {
            (ComparisonKind::Nn, ComparisonParams::Affine { w, b }) => (0..l)
                .map(|i| {
                    let mut acc = b.data()[i];
                    for k in 0..l {
                        acc += w.at(i, k) * a_col[k];
                        acc += w.at(i, l + k) * h_col[k];
                    }
                    acc.max(0.0)
                })
                .collect(),
            (ComparisonKind::Ntn, ComparisonParams::Bilinear { t, b }) => (0..l)
                .map(|s| {
                    let mut acc = b.data()[s];
                    for p in 0..l {
                        for q in 0..l {
                            acc += a_col[p] * t.data()[s * l * l + p * l + q] * h_col[q];
                        }
                    }
                    acc.max(0.0)
                })
                .collect(),
            (ComparisonKind::EucCos, _) => {
                let dist: f64 = a_col
                    .iter()
                    .zip(h_col)
                    .map(|(a, h)| (a - h) * (a - h))
                    .sum::<f64>()
                    .sqrt();
                let dot: f64 = a_col.iter().zip(h_col).map(|(a, h)| a * h).sum();
                let na: f64 = a_col.iter().map(|a| a * a).sum::<f64>().sqrt();
                let nh: f64 = h_col.iter().map(|h| h * h).sum::<f64>().sqrt();
                let cos = if na < 1e-12 || nh < 1e-12 {
                    0.0
                } else {
                    dot / (na * nh)
                };
                vec![dist, cos]
            }
            (ComparisonKind::Sub, _) => a_col
                .iter()
                .zip(h_col)
                .map(|(a, h)| (a - h) * (a - h))
                .collect(),
            (ComparisonKind::Mult, _) => a_col.iter().zip(h_col).map(|(a, h)| a * h).collect(),
            (ComparisonKind::SubMultNn, ComparisonParams::Affine { w, b }) => (0..l)
                .map(|i| {
                    let mut acc = b.data()[i];
                    for k in 0..l {
                        let d = a_col[k] - h_col[k];
                        acc += w.at(i, k) * d * d;
                        acc += w.at(i, l + k) * a_col[k] * h_col[k];
                    }
                    acc.max(0.0)
                })
                .collect(),
            _ => unreachable!(),
        }
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in ALL_KINDS {
            assert_eq!(kind.name().parse::<ComparisonKind>().unwrap(), kind);
        }
        assert!("cosine".parse::<ComparisonKind>().is_err());
    }

    #[test]
    fn sub_of_identical_columns_is_zero() {
        let (a, _) = rand_pair(4, 3, 41);
        let out = run(ComparisonKind::Sub, &ComparisonParams::None, &a, &a);
        assert!(out.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn euccos_of_identical_nonzero_columns() {
        let (a, _) = rand_pair(4, 3, 42);
        let out = run(ComparisonKind::EucCos, &ComparisonParams::None, &a, &a);
        for j in 0..3 {
            assert!(out.at(0, j).abs() < 1e-12);
            assert!((out.at(1, j) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mult_with_ones_is_identity() {
        let (a, _) = rand_pair(4, 3, 43);
        let ones = Tensor::filled(&[4, 3], 1.0);
        let out = run(ComparisonKind::Mult, &ComparisonParams::None, &a, &ones);
        assert_eq!(out, a);
    }

    #[test]
    fn zero_weights_leave_only_the_bias() {
        let mut rng = ChaCha20Rng::seed_from_u64(44);
        let l = 4;
        let b = glorot_vector(l, &mut rng);
        let (a, h) = rand_pair(l, 3, 45);

        let affine = ComparisonParams::Affine {
            w: Tensor::zeros(&[l, 2 * l]),
            b: b.clone(),
        };
        let out = run(ComparisonKind::Nn, &affine, &a, &h);
        for j in 0..3 {
            for i in 0..l {
                assert_eq!(out.at(i, j), b.data()[i].max(0.0));
            }
        }

        let bilinear = ComparisonParams::Bilinear {
            t: Tensor::zeros(&[l, l, l]),
            b: b.clone(),
        };
        let out = run(ComparisonKind::Ntn, &bilinear, &a, &h);
        for j in 0..3 {
            for i in 0..l {
                assert_eq!(out.at(i, j), b.data()[i].max(0.0));
            }
        }
    }

    #[test]
    fn every_kind_matches_its_scalar_oracle() {
        let (l, a_len) = (4, 3);
        for (i, kind) in ALL_KINDS.into_iter().enumerate() {
            let mut rng = ChaCha20Rng::seed_from_u64(50 + i as u64);
            let params = ComparisonParams::init(kind, l, &mut rng);
            let (a, h) = rand_pair(l, a_len, 60 + i as u64);
            let out = run(kind, &params, &a, &h);
            assert_eq!(out.shape(), &[kind.output_dim(l), a_len]);
            for j in 0..a_len {
                let want = scalar_oracle(kind, &params, &a.column(j), &h.column(j));
                for (r, w) in want.iter().enumerate() {
                    assert!(
                        (out.at(r, j) - w).abs() < 1e-12,
                        "{kind} disagrees at ({r},{j})"
                    );
                }
            }
        }
    }

    #[test]
    fn mismatched_params_are_a_configuration_error() {
        let (a, h) = rand_pair(4, 2, 46);
        let mut tape = Tape::new();
        let av = tape.constant(a);
        let hv = tape.constant(h);
        let err = compare(
            &mut tape,
            ComparisonKind::Nn,
            &ComparisonVars::None,
            av,
            hv,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn every_kind_passes_the_gradient_check() {
        let (l, a_len) = (4, 3);
        for (i, kind) in ALL_KINDS.into_iter().enumerate() {
            let mut rng = ChaCha20Rng::seed_from_u64(70 + i as u64);
            let params = ComparisonParams::init(kind, l, &mut rng);
            let mut tensors = vec![
                (
                    "abar".to_string(),
                    Tensor::random_uniform(&[l, a_len], -1.0, 1.0, &mut rng),
                ),
                (
                    "h".to_string(),
                    Tensor::random_uniform(&[l, a_len], -1.0, 1.0, &mut rng),
                ),
            ];
            match &params {
                ComparisonParams::Affine { w, b } => {
                    tensors.push(("cmp.w".to_string(), w.clone()));
                    tensors.push(("cmp.b".to_string(), b.clone()));
                }
                ComparisonParams::Bilinear { t, b } => {
                    tensors.push(("cmp.t".to_string(), t.clone()));
                    tensors.push(("cmp.b".to_string(), b.clone()));
                }
                ComparisonParams::None => {}
            }
            let report = check_gradients(&tensors, DEFAULT_STEP, |tape, vars| {
                let cmp_vars = match params {
                    ComparisonParams::Affine { .. } => ComparisonVars::Affine {
                        w: vars[2],
                        b: vars[3],
                    },
                    ComparisonParams::Bilinear { .. } => ComparisonVars::Bilinear {
                        t: vars[2],
                        b: vars[3],
                    },
                    ComparisonParams::None => ComparisonVars::None,
                };
                let out = compare(tape, kind, &cmp_vars, vars[0], vars[1])?;
                Ok(tape.sum(out))
            })
            .unwrap();
            assert!(report.passes(1e-4), "{kind}: {report:?}");
        }
    }

    proptest! {
        #[test]
        fn sub_and_mult_are_symmetric(seed in 0u64..300) {
            let (a, h) = rand_pair(4, 3, seed);
            for kind in [ComparisonKind::Sub, ComparisonKind::Mult] {
                let fwd = run(kind, &ComparisonParams::None, &a, &h);
                let rev = run(kind, &ComparisonParams::None, &h, &a);
                prop_assert_eq!(fwd, rev);
            }
        }

        #[test]
        fn sub_column_sum_is_the_squared_distance(seed in 0u64..300) {
            let (a, h) = rand_pair(4, 3, seed);
            let out = run(ComparisonKind::Sub, &ComparisonParams::None, &a, &h);
            let dists = run(ComparisonKind::EucCos, &ComparisonParams::None, &a, &h);
            for j in 0..3 {
                let col_sum: f64 = out.column(j).iter().sum();
                prop_assert!(col_sum >= 0.0);
                let dist = dists.at(0, j);
                prop_assert!((col_sum - dist * dist).abs() < 1e-9);
            }
        }

        #[test]
        fn cosine_is_bounded_and_scale_invariant(seed in 0u64..300, scale in 0.01f64..50.0) {
            let (a, h) = rand_pair(4, 3, seed);
            let out = run(ComparisonKind::EucCos, &ComparisonParams::None, &a, &h);
            let scaled = run(
                ComparisonKind::EucCos,
                &ComparisonParams::None,
                &a.map(|x| x * scale),
                &h,
            );
            for j in 0..3 {
                let cos = out.at(1, j);
                prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&cos));
                prop_assert!((scaled.at(1, j) - cos).abs() < 1e-9);
            }
        }

        #[test]
        fn output_shapes_and_signs_hold_for_all_kinds(seed in 0u64..100, a_len in 1usize..5) {
            let l = 4;
            for kind in ALL_KINDS {
                let mut rng = ChaCha20Rng::seed_from_u64(seed);
                let params = ComparisonParams::init(kind, l, &mut rng);
                let (a, h) = rand_pair(l, a_len, seed ^ 0xabcd);
                let out = run(kind, &params, &a, &h);
                prop_assert_eq!(out.shape(), &[kind.output_dim(l), a_len]);
                if matches!(
                    kind,
                    ComparisonKind::Nn | ComparisonKind::Ntn | ComparisonKind::SubMultNn
                ) {
                    prop_assert!(out.data().iter().all(|&x| x >= 0.0));
                }
            }
        }
    }
}
