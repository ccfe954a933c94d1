//! Gradient diagnostics: per-op finite-difference checks and the composed
//! loss check on a small toy instance.
//!
//! Inputs are sampled away from non-differentiable kinks: leaky_relu inputs
//! keep |x| >= 0.1, penalty thetas stay clear of the target and the clamp
//! boundaries, max/min rows are generically untied.

use rand::Rng;

use crate::autodiff::gradcheck::gradient_check;
use crate::autodiff::Tape;
use crate::discriminator::{aggregate_candidate, predict, score_candidate, DiscriminatorParams};
use crate::encoder::{encode, IncidenceGroups};
use crate::error::{Error, Result};
use crate::generator::{
    decode_membership, encode_positive, one_hot, sample_noise, select_topn, GeneratorParams,
};
use crate::hypergraph::Hypergraph;
use crate::matrix::Matrix;
use crate::model::{ModelDims, ModelParams};
use crate::rng::{named_stream, StreamRng};
use crate::training::{
    loss_discriminator, loss_generator, loss_regularization, TrainConfig, THETA_EPS,
};

pub const GRAD_TOLERANCE: f64 = 1e-4;
const STEP: f64 = 1e-5;
const TRIALS: usize = 10;

pub struct CheckOutcome {
    pub name: String,
    pub max_rel_err: f64,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.max_rel_err < GRAD_TOLERANCE
    }
}

fn rand_mat(rows: usize, cols: usize, rng: &mut StreamRng) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

/// Magnitudes in [0.1, 1.0]: clear of the kink at zero.
fn rand_mat_off_zero(rows: usize, cols: usize, rng: &mut StreamRng) -> Matrix {
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| {
                let mag = rng.gen_range(0.1..1.0);
                if rng.gen_bool(0.5) {
                    mag
                } else {
                    -mag
                }
            })
            .collect(),
    )
}

fn sq_sum(tape: &mut Tape, v: crate::autodiff::Value) -> Result<crate::autodiff::Value> {
    let sq = tape.mul(v, v)?;
    tape.sum_all(sq)
}

type PointFn = Box<dyn Fn(&mut StreamRng) -> Vec<Matrix>>;
type BuildFn =
    Box<dyn Fn(&mut Tape, &[crate::autodiff::Value]) -> Result<crate::autodiff::Value>>;

struct OpCase {
    name: &'static str,
    point: PointFn,
    build: BuildFn,
}

fn op_cases() -> Vec<OpCase> {
    let mut cases: Vec<OpCase> = Vec::new();
    let mut case = |name: &'static str, point: PointFn, build: BuildFn| {
        cases.push(OpCase { name, point, build });
    };

    case(
        "matmul",
        Box::new(|rng| vec![rand_mat(3, 4, rng), rand_mat(4, 2, rng)]),
        Box::new(|tape, v| {
            let c = tape.matmul(v[0], v[1])?;
            sq_sum(tape, c)
        }),
    );
    case(
        "add",
        Box::new(|rng| vec![rand_mat(2, 3, rng), rand_mat(2, 3, rng)]),
        Box::new(|tape, v| {
            let c = tape.add(v[0], v[1])?;
            sq_sum(tape, c)
        }),
    );
    case(
        "sub",
        Box::new(|rng| vec![rand_mat(2, 3, rng), rand_mat(2, 3, rng)]),
        Box::new(|tape, v| {
            let c = tape.sub(v[0], v[1])?;
            sq_sum(tape, c)
        }),
    );
    case(
        "mul",
        Box::new(|rng| vec![rand_mat(2, 3, rng), rand_mat(2, 3, rng)]),
        Box::new(|tape, v| {
            let c = tape.mul(v[0], v[1])?;
            sq_sum(tape, c)
        }),
    );
    case(
        "scale",
        Box::new(|rng| vec![rand_mat(2, 4, rng)]),
        Box::new(|tape, v| {
            let c = tape.scale(v[0], -0.7);
            sq_sum(tape, c)
        }),
    );
    case(
        "add_row_broadcast",
        Box::new(|rng| vec![rand_mat(3, 4, rng), rand_mat(1, 4, rng)]),
        Box::new(|tape, v| {
            let c = tape.add_row_broadcast(v[0], v[1])?;
            sq_sum(tape, c)
        }),
    );
    case(
        "row_scale",
        Box::new(|rng| vec![rand_mat(3, 4, rng), rand_mat(3, 1, rng)]),
        Box::new(|tape, v| {
            let c = tape.row_scale(v[0], v[1])?;
            sq_sum(tape, c)
        }),
    );
    case(
        "leaky_relu",
        Box::new(|rng| vec![rand_mat_off_zero(2, 5, rng)]),
        Box::new(|tape, v| {
            let c = tape.leaky_relu(v[0], 0.01);
            sq_sum(tape, c)
        }),
    );
    case(
        "sigmoid",
        Box::new(|rng| vec![rand_mat(2, 5, rng)]),
        Box::new(|tape, v| {
            let c = tape.sigmoid(v[0]);
            sq_sum(tape, c)
        }),
    );
    case(
        "softplus",
        Box::new(|rng| vec![rand_mat(2, 5, rng)]),
        Box::new(|tape, v| {
            let c = tape.softplus(v[0]);
            sq_sum(tape, c)
        }),
    );
    case(
        "conv1d",
        Box::new(|rng| vec![rand_mat(2, 5, rng), rand_mat(3, 6, rng), rand_mat(1, 3, rng)]),
        Box::new(|tape, v| {
            let c = tape.conv1d(v[0], v[1], v[2])?;
            sq_sum(tape, c)
        }),
    );
    case(
        "avgpool1d",
        Box::new(|rng| vec![rand_mat(2, 5, rng)]),
        Box::new(|tape, v| {
            let c = tape.avgpool1d(v[0], 2)?;
            sq_sum(tape, c)
        }),
    );
    case(
        "adain",
        Box::new(|rng| vec![rand_mat(2, 6, rng), rand_mat(1, 2, rng), rand_mat(1, 2, rng)]),
        Box::new(|tape, v| {
            let c = tape.adain(v[0], v[1], v[2], 1e-5)?;
            sq_sum(tape, c)
        }),
    );
    case(
        "upsample2",
        Box::new(|rng| vec![rand_mat(2, 3, rng)]),
        Box::new(|tape, v| {
            let c = tape.upsample2(v[0]);
            sq_sum(tape, c)
        }),
    );
    case(
        "reshape",
        Box::new(|rng| vec![rand_mat(2, 6, rng)]),
        Box::new(|tape, v| {
            let c = tape.reshape(v[0], 3, 4)?;
            sq_sum(tape, c)
        }),
    );
    case(
        "concat_cols",
        Box::new(|rng| vec![rand_mat(2, 3, rng), rand_mat(2, 2, rng)]),
        Box::new(|tape, v| {
            let c = tape.concat_cols(v[0], v[1])?;
            sq_sum(tape, c)
        }),
    );
    case(
        "concat_rows",
        Box::new(|rng| vec![rand_mat(1, 4, rng), rand_mat(2, 4, rng), rand_mat(1, 4, rng)]),
        Box::new(|tape, v| {
            let c = tape.concat_rows(v)?;
            sq_sum(tape, c)
        }),
    );
    case(
        "gather_rows",
        Box::new(|rng| vec![rand_mat(5, 3, rng)]),
        Box::new(|tape, v| {
            // Repeated index exercises the scatter-add.
            let c = tape.gather_rows(v[0], &[0, 2, 2, 4])?;
            sq_sum(tape, c)
        }),
    );
    case(
        "col_max",
        Box::new(|rng| vec![rand_mat(4, 3, rng)]),
        Box::new(|tape, v| {
            let c = tape.col_max(v[0])?;
            sq_sum(tape, c)
        }),
    );
    case(
        "col_min",
        Box::new(|rng| vec![rand_mat(4, 3, rng)]),
        Box::new(|tape, v| {
            let c = tape.col_min(v[0])?;
            sq_sum(tape, c)
        }),
    );
    case(
        "sum_all",
        Box::new(|rng| vec![rand_mat(3, 3, rng)]),
        Box::new(|tape, v| {
            let s = tape.sigmoid(v[0]);
            tape.sum_all(s)
        }),
    );
    case(
        "mean_all",
        Box::new(|rng| vec![rand_mat(3, 3, rng)]),
        Box::new(|tape, v| {
            let s = tape.sigmoid(v[0]);
            tape.mean_all(s)
        }),
    );
    case(
        "cosine_similarity",
        Box::new(|rng| vec![rand_mat_off_zero(1, 4, rng), rand_mat_off_zero(1, 4, rng)]),
        Box::new(|tape, v| tape.cosine_similarity(v[0], v[1], 1e-12)),
    );
    case(
        "similarity_penalty",
        Box::new(|rng| {
            // Theta in (0.1, 0.4) or (0.6, 0.9): away from k=0.5, the clamp
            // boundaries, and the |theta - k| kink.
            let data: Vec<f64> = (0..6)
                .map(|_| {
                    if rng.gen_bool(0.5) {
                        rng.gen_range(0.1..0.4)
                    } else {
                        rng.gen_range(0.6..0.9)
                    }
                })
                .collect();
            vec![Matrix::from_vec(1, 6, data)]
        }),
        Box::new(|tape, v| {
            let pen = tape.similarity_penalty(v[0], 0.5, 2.0, THETA_EPS)?;
            tape.mean_all(pen)
        }),
    );
    case(
        "group_mean_rows",
        Box::new(|rng| vec![rand_mat(5, 3, rng)]),
        Box::new(|tape, v| {
            let groups = std::rc::Rc::new(vec![vec![0, 1], vec![2], vec![], vec![3, 4, 0]]);
            let c = tape.group_mean_rows(v[0], groups)?;
            sq_sum(tape, c)
        }),
    );
    cases
}

pub fn op_names() -> Vec<&'static str> {
    op_cases().iter().map(|c| c.name).collect()
}

/// Run the per-op finite-difference suite, `TRIALS` random points per op.
/// `only` filters by op name when nonempty.
pub fn run_op_checks(seed: u64, only: &[String]) -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();
    for case in op_cases() {
        if !only.is_empty() && !only.iter().any(|n| n == case.name) {
            continue;
        }
        let mut rng = named_stream(seed, case.name);
        let mut worst = 0.0f64;
        for _ in 0..TRIALS {
            let point = (case.point)(&mut rng);
            let err = gradient_check(|tape, leaves| (case.build)(tape, leaves), &point, STEP)?;
            worst = worst.max(err);
        }
        out.push(CheckOutcome { name: case.name.to_string(), max_rel_err: worst });
    }
    if out.is_empty() {
        return Err(Error::Parameter(format!(
            "no ops match the filter; known ops: {}",
            op_names().join(", ")
        )));
    }
    Ok(out)
}

/// Shift every parameter a small random amount so no preactivation sits
/// exactly on a LeakyReLU kink (zero-initialized biases otherwise align
/// dead conv positions with the kink and break central differences).
fn jitter_params(params: &mut ModelParams, rng: &mut StreamRng) {
    let mut jitter = |tensors: Vec<&mut Matrix>| {
        for t in tensors {
            for v in t.as_mut_slice() {
                let mag = rng.gen_range(0.02..0.05);
                *v += if rng.gen_bool(0.5) { mag } else { -mag };
            }
        }
    };
    jitter(params.encoder.tensors_mut());
    jitter(params.generator.tensors_mut());
    jitter(params.discriminator.tensors_mut());
}

/// Fixed 6-node toy hypergraph for composed checks.
pub fn toy_instance() -> Hypergraph {
    Hypergraph::new(
        vec![vec![0, 1, 2], vec![2, 3], vec![3, 4, 5], vec![1, 4]],
        Matrix::from_rows(&[
            vec![0.83, -0.21, 0.44],
            vec![0.12, 0.47, -0.66],
            vec![-0.53, 0.91, 0.25],
            vec![0.31, 0.28, 0.77],
            vec![-0.74, -0.13, 0.52],
            vec![0.62, -0.58, -0.35],
        ]),
    )
    .unwrap()
}

fn toy_dims(h: &Hypergraph) -> ModelDims {
    ModelDims {
        num_nodes: h.num_nodes(),
        feature_dim: h.features().cols(),
        embed_dim: 4,
        layers: 1,
        channels: 4,
        noise_dim: 3,
    }
}

/// Which composed objective to differentiate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComposedLoss {
    Discriminator,
    GeneratorWithPenalty,
    Total,
}

impl ComposedLoss {
    pub fn label(self) -> &'static str {
        match self {
            ComposedLoss::Discriminator => "composed_loss_d",
            ComposedLoss::GeneratorWithPenalty => "composed_loss_g",
            ComposedLoss::Total => "composed_loss_total",
        }
    }
}

/// Finite-difference check of a composed objective on the toy instance,
/// differentiating every encoder, generator and discriminator parameter.
///
/// The discrete top-n node sets are fixed at the base point: the training
/// loss holds them constant within a step (gradient reaches the generator
/// through the soft membership weights), so the differentiated function
/// must too — recomputing the selection under each probe would turn every
/// selection boundary into a spurious jump.
pub fn full_loss_check(seed: u64, which: ComposedLoss) -> Result<f64> {
    let h = toy_instance();
    let dims = toy_dims(&h);
    let config = TrainConfig { k: 0.5, p: 2.0, beta: 0.1, ..TrainConfig::default() };
    let mut rng = named_stream(seed, "init");
    let mut params = ModelParams::init(dims, &mut rng);
    jitter_params(&mut params, &mut rng);

    let batch: Vec<usize> = vec![0, 2];
    let batch_sizes = [2usize, 3usize];
    let mut noise_rng = named_stream(seed, "noise");
    let batch_noise: Vec<Matrix> =
        (0..batch.len()).map(|_| sample_noise(dims.noise_dim, &mut noise_rng)).collect();
    let groups = IncidenceGroups::full(&h);

    // Freeze the selected node sets at the base parameters.
    let frozen_ids: Vec<Vec<usize>> = {
        let mut scratch = Tape::new();
        let gen = params.generator.bind(&mut scratch);
        batch
            .iter()
            .zip(&batch_noise)
            .zip(batch_sizes)
            .map(|((&pos, noise), n)| {
                let onehot = scratch.leaf(one_hot(h.edge(pos), h.num_nodes()));
                let latent = encode_positive(&mut scratch, &gen, onehot)?;
                let z = scratch.leaf(noise.clone());
                let c = decode_membership(&mut scratch, &gen, latent, z)?;
                select_topn(scratch.data(c).as_slice(), n)
            })
            .collect::<Result<_>>()?
    };

    let n_enc = params.encoder.tensors().len();
    let n_gen = params.generator.tensors().len();
    let mut point: Vec<Matrix> = params.encoder.tensors().into_iter().cloned().collect();
    point.extend(params.generator.tensors().into_iter().cloned());
    point.extend(params.discriminator.tensors().into_iter().cloned());

    let enc_template = params.encoder.clone();
    let gen_template = params.generator.clone();
    let features = h.features().clone();
    let edges: Vec<Vec<usize>> = h.edges().to_vec();
    let num_nodes = h.num_nodes();

    gradient_check(
        move |tape, leaves| {
            let enc = enc_template.bind_values(&leaves[..n_enc]);
            let gen = gen_template.bind_values(&leaves[n_enc..n_enc + n_gen]);
            let disc = DiscriminatorParams::bind_values_static(&leaves[n_enc + n_gen..]);
            let x = tape.leaf(features.clone());
            let (p, _q) = encode(tape, &enc, &groups, x)?;

            let mut pos_scores = Vec::new();
            let mut neg_scores = Vec::new();
            let mut q_pos_rows = Vec::new();
            let mut q_neg_rows = Vec::new();
            for (j, &pos) in batch.iter().enumerate() {
                pos_scores.push(score_candidate(tape, &disc, p, &edges[pos], None)?);
                let onehot = tape.leaf(one_hot(&edges[pos], num_nodes));
                let latent = encode_positive(tape, &gen, onehot)?;
                let z = tape.leaf(batch_noise[j].clone());
                let c = decode_membership(tape, &gen, latent, z)?;
                let ids = &frozen_ids[j];
                let c_col = tape.reshape(c, num_nodes, 1)?;
                let w = tape.gather_rows(c_col, ids)?;
                let q_neg = aggregate_candidate(tape, p, ids, Some(w))?;
                neg_scores.push(predict(tape, &disc, q_neg)?);
                q_neg_rows.push(q_neg);
                q_pos_rows.push(aggregate_candidate(tape, p, &edges[pos], None)?);
            }

            let l_d = loss_discriminator(tape, &pos_scores, &neg_scores)?;
            let l_g = loss_generator(tape, &neg_scores)?;
            let q_pos = tape.concat_rows(&q_pos_rows)?;
            let q_neg = tape.concat_rows(&q_neg_rows)?;
            let reg = loss_regularization(tape, q_pos, q_neg, config.k, config.p, THETA_EPS)?;
            let reg_scaled = tape.scale(reg.loss, config.beta);
            match which {
                ComposedLoss::Discriminator => Ok(l_d),
                ComposedLoss::GeneratorWithPenalty => tape.add(l_g, reg_scaled),
                ComposedLoss::Total => {
                    let adv = tape.add(l_d, l_g)?;
                    tape.add(adv, reg_scaled)
                }
            }
        },
        &point,
        STEP,
    )
}

/// Gradient of the generator-step objective with respect to each generator
/// tensor; used to confirm that gradient reaches every parameter block.
pub fn generator_gradient_norms(seed: u64) -> Result<Vec<(String, f64)>> {
    let h = toy_instance();
    let dims = toy_dims(&h);
    let mut rng = named_stream(seed, "init");
    let mut params = ModelParams::init(dims, &mut rng);
    jitter_params(&mut params, &mut rng);
    let groups = IncidenceGroups::full(&h);
    let mut noise_rng = named_stream(seed, "noise");

    let mut tape = Tape::new();
    let enc = params.encoder.bind(&mut tape);
    let gen = params.generator.bind(&mut tape);
    let disc = params.discriminator.bind(&mut tape);
    let x = tape.leaf(h.features().clone());
    let (p, _q) = encode(&mut tape, &enc, &groups, x)?;

    let mut neg_scores = Vec::new();
    let mut q_pos_rows = Vec::new();
    let mut q_neg_rows = Vec::new();
    for (&pos, n) in [0usize, 2].iter().zip([2usize, 3]) {
        let onehot = tape.leaf(one_hot(h.edge(pos), h.num_nodes()));
        let latent = encode_positive(&mut tape, &gen, onehot)?;
        let z = tape.leaf(sample_noise(dims.noise_dim, &mut noise_rng));
        let c = decode_membership(&mut tape, &gen, latent, z)?;
        let ids = select_topn(tape.data(c).as_slice(), n)?;
        let c_col = tape.reshape(c, h.num_nodes(), 1)?;
        let w = tape.gather_rows(c_col, &ids)?;
        let q_neg = aggregate_candidate(&mut tape, p, &ids, Some(w))?;
        neg_scores.push(predict(&mut tape, &disc, q_neg)?);
        q_neg_rows.push(q_neg);
        q_pos_rows.push(aggregate_candidate(&mut tape, p, h.edge(pos), None)?);
    }
    let l_g = loss_generator(&mut tape, &neg_scores)?;
    let q_pos = tape.concat_rows(&q_pos_rows)?;
    let q_neg = tape.concat_rows(&q_neg_rows)?;
    let reg = loss_regularization(&mut tape, q_pos, q_neg, 0.5, 2.0, THETA_EPS)?;
    let reg_scaled = tape.scale(reg.loss, 0.1);
    let total = tape.add(l_g, reg_scaled)?;
    tape.backward(total)?;

    let names = generator_tensor_names(&params.generator);
    Ok(gen
        .values()
        .iter()
        .zip(names)
        .map(|(&v, name)| {
            let norm = tape.grad(v).as_slice().iter().map(|g| g * g).sum::<f64>().sqrt();
            (name, norm)
        })
        .collect())
}

fn generator_tensor_names(g: &GeneratorParams) -> Vec<String> {
    let mut names = Vec::new();
    for i in 0..g.enc_convs.len() {
        names.push(format!("enc_conv{i}_kernels"));
        names.push(format!("enc_conv{i}_bias"));
    }
    names.push("enc_proj_w".into());
    names.push("enc_proj_b".into());
    names.push("dec_in_w".into());
    names.push("dec_in_b".into());
    for i in 0..g.dec_layers.len() {
        names.push(format!("dec_conv{i}_kernels"));
        names.push(format!("dec_conv{i}_bias"));
        names.push(format!("dec_conv{i}_w_scale"));
        names.push(format!("dec_conv{i}_b_scale"));
        names.push(format!("dec_conv{i}_w_shift"));
        names.push(format!("dec_conv{i}_b_shift"));
    }
    names.push("dec_out_w".into());
    names.push("dec_out_b".into());
    names
}

/// Negative control: compare a deliberately wrong analytic derivative of
/// the sigmoid at zero against its honest central difference. The reported
/// error must trip the tolerance gate.
pub fn fault_injection_check() -> CheckOutcome {
    let eval = |x: f64| 1.0 / (1.0 + (-x).exp());
    let h = 1e-5;
    let numeric = (eval(h) - eval(-h)) / (2.0 * h);
    let broken_analytic = 0.25 + 0.1;
    CheckOutcome {
        name: "fault_injection".into(),
        max_rel_err: (broken_analytic - numeric).abs() / broken_analytic.abs().max(1.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_op_passes_finite_differences() {
        for check in run_op_checks(1234, &[]).unwrap() {
            assert!(
                check.passed(),
                "{} failed with max relative error {}",
                check.name,
                check.max_rel_err
            );
        }
    }

    #[test]
    fn composed_losses_pass_finite_differences() {
        for which in [
            ComposedLoss::Discriminator,
            ComposedLoss::GeneratorWithPenalty,
            ComposedLoss::Total,
        ] {
            let err = full_loss_check(42, which).unwrap();
            assert!(err < GRAD_TOLERANCE, "{} error {err}", which.label());
        }
    }

    #[test]
    fn gradient_reaches_every_generator_tensor() {
        let norms = generator_gradient_norms(42).unwrap();
        for (name, norm) in norms {
            assert!(norm > 0.0, "no gradient reached {name}");
        }
    }

    #[test]
    fn op_filter_restricts_the_suite() {
        let checks = run_op_checks(1, &["sigmoid".to_string()]).unwrap();
        assert_eq!(checks.len(), 1);
        assert_eq!(checks[0].name, "sigmoid");
        assert!(matches!(
            run_op_checks(1, &["nonsense".to_string()]),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn fault_injection_trips_the_gate() {
        assert!(!fault_injection_check().passed());
    }
}




