//! Gradient-check fixtures: every graph primitive and every loss, each
//! reduced to a scalar through a fixed random projection.

use std::sync::Arc;

use msbatn::attention::Neighborhood;
use msbatn::losses::{
    combined_temporal_loss, dice_loss, focal_loss, gaussian_cosine_similarity_loss,
    gaussian_truncated_boundary_loss, GaussianProfile, LossConfig, LossTarget, StageVars,
};
use msbatn::segments::{
    boundary_weight_profile, frames_to_segments, make_boundary_target, SigmaPolicy,
};
use msbatn::seqcore::{ConvMode, Graph, SeqTensor, Var};
use msbatn::Result;
use rand::Rng;

use super::{random_matrix, rng};

type Scalar = Box<dyn Fn(&mut Graph, &[Var]) -> Result<Var>>;

pub struct Case {
    pub name: &'static str,
    pub inputs: Vec<SeqTensor>,
    pub f: Scalar,
}

fn case(
    name: &'static str,
    inputs: Vec<SeqTensor>,
    f: impl Fn(&mut Graph, &[Var]) -> Result<Var> + 'static,
) -> Case {
    Case {
        name,
        inputs,
        f: Box::new(f),
    }
}

/// `Σ y ⊙ R` for a fixed random `R` shaped like `y`.
fn project(g: &mut Graph, y: Var, seed: u64) -> Result<Var> {
    let shape = g.shape(y).to_vec();
    let mut r = rng(seed);
    let data = (0..shape.iter().product::<usize>())
        .map(|_| r.random_range(-1.0..1.0))
        .collect();
    let c = g.constant(SeqTensor::new(shape, data)?);
    let p = g.mul(y, c)?;
    Ok(g.sum(p))
}

fn mat(seed: u64, r: usize, c: usize) -> SeqTensor {
    random_matrix(&mut rng(seed), r, c, 1.0)
}

fn vec_of(seed: u64, n: usize) -> SeqTensor {
    SeqTensor::vector(mat(seed, 1, n).into_data())
}

/// Entries kept at least `gap` away from `kink`.
fn away_from(seed: u64, r: usize, c: usize, kink: f64, gap: f64) -> SeqTensor {
    let mut m = mat(seed, r, c);
    for v in m.data_mut() {
        if (*v - kink).abs() < gap {
            *v = kink + gap * if *v >= kink { 1.0 } else { -1.0 };
        }
    }
    m
}

fn positive(seed: u64, r: usize, c: usize) -> SeqTensor {
    let mut m = mat(seed, r, c);
    m.data_mut().iter_mut().for_each(|v| *v = 0.5 + v.abs());
    m
}

pub fn primitive_cases() -> Vec<Case> {
    let picks = vec![2usize, 0, 3, 1, 1];
    let allowed: Vec<Vec<usize>> = vec![
        vec![0, 2],
        vec![1],
        vec![0, 1, 3],
        vec![3],
        vec![0, 1, 2, 3],
    ];
    let nb = Arc::new(Neighborhood::hierarchical(9, 2, 2, false).unwrap());
    vec![
        case("matmul", vec![mat(1, 3, 4), mat(2, 4, 5)], |g, v| {
            let y = g.matmul(v[0], v[1])?;
            project(g, y, 100)
        }),
        case("transpose", vec![mat(3, 3, 4)], |g, v| {
            let y = g.transpose(v[0])?;
            project(g, y, 101)
        }),
        case("reshape", vec![mat(4, 3, 4)], |g, v| {
            let y = g.reshape(v[0], &[2, 6])?;
            project(g, y, 102)
        }),
        case("add", vec![mat(5, 3, 4), mat(6, 3, 4)], |g, v| {
            let y = g.add(v[0], v[1])?;
            project(g, y, 103)
        }),
        case("sub", vec![mat(7, 3, 4), mat(8, 3, 4)], |g, v| {
            let y = g.sub(v[0], v[1])?;
            project(g, y, 104)
        }),
        case("mul", vec![mat(9, 3, 4), mat(10, 3, 4)], |g, v| {
            let y = g.mul(v[0], v[1])?;
            project(g, y, 105)
        }),
        case("div", vec![mat(11, 3, 4), positive(12, 3, 4)], |g, v| {
            let y = g.div(v[0], v[1])?;
            project(g, y, 106)
        }),
        case(
            "add_row_bias",
            vec![mat(13, 3, 4), vec_of(14, 4)],
            |g, v| {
                let y = g.add_row_bias(v[0], v[1])?;
                project(g, y, 107)
            },
        ),
        case(
            "add_col_bias",
            vec![mat(15, 3, 4), vec_of(16, 3)],
            |g, v| {
                let y = g.add_col_bias(v[0], v[1])?;
                project(g, y, 108)
            },
        ),
        case(
            "linear",
            vec![mat(17, 5, 3), mat(18, 3, 4), vec_of(19, 4)],
            |g, v| {
                let y = g.linear(v[0], v[1], v[2])?;
                project(g, y, 109)
            },
        ),
        case("scale", vec![mat(20, 3, 4)], |g, v| {
            let y = g.scale(v[0], -1.7);
            project(g, y, 110)
        }),
        case("offset", vec![mat(21, 3, 4)], |g, v| {
            let y = g.offset(v[0], 0.3);
            project(g, y, 111)
        }),
        case("relu", vec![away_from(22, 3, 4, 0.0, 0.05)], |g, v| {
            let y = g.relu(v[0]);
            project(g, y, 112)
        }),
        case("gelu", vec![mat(23, 3, 4)], |g, v| {
            let y = g.gelu(v[0]);
            project(g, y, 113)
        }),
        case("sigmoid", vec![mat(24, 3, 4)], |g, v| {
            let y = g.sigmoid(v[0]);
            project(g, y, 114)
        }),
        case("exp", vec![mat(25, 3, 4)], |g, v| {
            let y = g.exp(v[0]);
            project(g, y, 115)
        }),
        case("log", vec![positive(26, 3, 4)], |g, v| {
            let y = g.log(v[0]);
            project(g, y, 116)
        }),
        case("powf", vec![positive(27, 3, 4)], |g, v| {
            let y = g.powf(v[0], 1.7);
            project(g, y, 117)
        }),
        case("clamp_max", vec![away_from(28, 3, 4, 0.3, 0.05)], |g, v| {
            let y = g.clamp_max(v[0], 0.3);
            project(g, y, 118)
        }),
        case("sum", vec![mat(29, 3, 4)], |g, v| {
            let y = g.sum(v[0]);
            let y = g.scale(y, 0.7);
            Ok(g.sum(y))
        }),
        case("mean", vec![mat(30, 3, 4)], |g, v| {
            let y = g.mean(v[0]);
            Ok(g.scale(y, 1.3))
        }),
        case("column_sums", vec![mat(31, 3, 4)], |g, v| {
            let y = g.column_sums(v[0])?;
            project(g, y, 121)
        }),
        case("softmax_rows", vec![mat(32, 3, 4)], |g, v| {
            let y = g.softmax_rows(v[0])?;
            project(g, y, 122)
        }),
        case("softmax_masked", vec![mat(33, 5, 4)], move |g, v| {
            let y = g.softmax_masked(v[0], &allowed)?;
            project(g, y, 123)
        }),
        case("log_softmax_rows", vec![mat(34, 3, 4)], |g, v| {
            let y = g.log_softmax_rows(v[0])?;
            project(g, y, 124)
        }),
        case(
            "layer_norm",
            vec![mat(35, 3, 5), vec_of(36, 5), vec_of(37, 5)],
            |g, v| {
                let y = g.layer_norm(v[0], v[1], v[2], 1e-5)?;
                project(g, y, 125)
            },
        ),
        case("cosine_rows", vec![mat(38, 4, 3), mat(39, 4, 3)], |g, v| {
            let y = g.cosine_rows(v[0], v[1], 1e-8)?;
            project(g, y, 126)
        }),
        case("slice_rows", vec![mat(40, 5, 3)], |g, v| {
            let y = g.slice_rows(v[0], 1, 4)?;
            project(g, y, 127)
        }),
        case("slice_cols", vec![mat(41, 3, 5)], |g, v| {
            let y = g.slice_cols(v[0], 2, 5)?;
            project(g, y, 128)
        }),
        case("concat_cols", vec![mat(42, 3, 2), mat(43, 3, 4)], |g, v| {
            let y = g.concat_cols(v[0], v[1])?;
            project(g, y, 129)
        }),
        case("pick", vec![mat(44, 5, 4)], move |g, v| {
            let y = g.pick(v[0], &picks)?;
            project(g, y, 130)
        }),
        case("mean_pool_rows", vec![mat(45, 7, 3)], |g, v| {
            let y = g.mean_pool_rows(v[0], 3)?;
            project(g, y, 131)
        }),
        case("upsample_linear_rows", vec![mat(46, 4, 3)], |g, v| {
            let y = g.upsample_linear_rows(v[0], 11, 3)?;
            project(g, y, 132)
        }),
        case(
            "conv1d_acausal",
            vec![
                mat(47, 3, 10),
                SeqTensor::new(vec![2, 3, 3], mat(48, 1, 18).into_data()).unwrap(),
                vec_of(49, 2),
            ],
            |g, v| {
                let y = g.conv1d(v[0], v[1], Some(v[2]), 2, ConvMode::Acausal, 2)?;
                project(g, y, 133)
            },
        ),
        case(
            "conv1d_causal",
            vec![
                mat(50, 3, 10),
                SeqTensor::new(vec![2, 3, 3], mat(51, 1, 18).into_data()).unwrap(),
            ],
            |g, v| {
                let y = g.conv1d(v[0], v[1], None, 3, ConvMode::Causal, 1)?;
                project(g, y, 134)
            },
        ),
        case(
            "depthwise_conv1d_acausal",
            vec![mat(52, 3, 10), mat(53, 3, 3), vec_of(54, 3)],
            |g, v| {
                let y = g.depthwise_conv1d(v[0], v[1], Some(v[2]), 2, ConvMode::Acausal, 1)?;
                project(g, y, 135)
            },
        ),
        case(
            "depthwise_conv1d_causal",
            vec![mat(55, 3, 10), mat(56, 3, 3)],
            |g, v| {
                let y = g.depthwise_conv1d(v[0], v[1], None, 4, ConvMode::Causal, 3)?;
                project(g, y, 136)
            },
        ),
        case(
            "sparse_attention",
            vec![
                mat(57, 9, 4),
                mat(58, 5, 4),
                mat(59, 9, 4),
                mat(60, 5, 4),
                mat(61, 9, 4),
                SeqTensor::vector(vec![0.6, 0.4]),
            ],
            move |g, v| {
                let y = g.sparse_attention(&v[0..2], &v[2..4], v[4], v[5], Arc::clone(&nb), 2)?;
                project(g, y, 137)
            },
        ),
    ]
}

fn toy_labels() -> Vec<usize> {
    [vec![0; 5], vec![2; 4], vec![1; 6], vec![2; 5]].concat()
}

pub fn loss_cases() -> Vec<Case> {
    let labels = toy_labels();
    let t = labels.len();
    let c = 3;
    let segs = frames_to_segments(&labels).unwrap();
    let center = GaussianProfile::segment_centers(&segs, &SigmaPolicy::default());
    let b_target = make_boundary_target(&segs, t);
    let b_weights = boundary_weight_profile(&segs, t);
    let cfg = LossConfig::default();
    let loss_target = LossTarget::new(&labels, c, &cfg).unwrap();

    let (l1, l2, l3, l4) = (
        labels.clone(),
        labels.clone(),
        labels.clone(),
        labels.clone(),
    );
    let (bt, bw) = (b_target.clone(), b_weights.clone());
    vec![
        case("focal", vec![mat(70, t, c)], move |g, v| {
            focal_loss(g, v[0], &l1, 2.0, None)
        }),
        case("focal_weighted", vec![mat(71, t, c)], move |g, v| {
            focal_loss(g, v[0], &l2, 1.5, Some(&[0.5, 1.0, 2.0]))
        }),
        case("focal_gamma0", vec![mat(72, t, c)], move |g, v| {
            focal_loss(g, v[0], &l3, 0.0, None)
        }),
        case("dice", vec![mat(73, t, c)], move |g, v| {
            let p = g.softmax_rows(v[0])?;
            dice_loss(g, p, &l4, 1e-6)
        }),
        case("gaussian_similarity", vec![mat(74, t, 5)], move |g, v| {
            gaussian_cosine_similarity_loss(g, v[0], &center, 1e-8)
        }),
        case("truncated_boundary", vec![mat(75, 1, t)], move |g, v| {
            let raw = g.reshape(v[0], &[t])?;
            let s = g.sigmoid(raw);
            gaussian_truncated_boundary_loss(g, s, &bt, &bw, 0.5)
        }),
        case(
            "combined",
            vec![
                mat(76, t, c),
                mat(77, 1, t),
                mat(78, t, 4),
                mat(79, t, c),
                mat(80, 1, t),
                mat(81, t, 4),
            ],
            move |g, v| {
                let mut stages = Vec::new();
                for k in 0..2 {
                    let raw = g.reshape(v[3 * k + 1], &[t])?;
                    let boundary = g.sigmoid(raw);
                    stages.push(StageVars {
                        logits: v[3 * k],
                        boundary,
                        features: v[3 * k + 2],
                    });
                }
                Ok(combined_temporal_loss(g, &stages, &loss_target, &cfg)?.0)
            },
        ),
    ]
}
