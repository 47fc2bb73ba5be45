//! Finite-difference checks for every differentiable operation and the full
//! tiny network. Each case yields `(label, max relative error, tolerance)`.

use ctnet::model::{build_model, forward, BoundParams, ModelConfig, ModelParams};
use ctnet::numerics::{grad_check, NormMode, Tape, Tensor, Var, NORM_EPS};
use ctnet::{Result, Rng};

pub const STEP: f64 = 1e-5;
pub const TOL: f64 = 1e-4;
/// Tolerance for chains without curvature.
pub const LINEAR_TOL: f64 = 1e-7;

pub type Case = (String, f64, f64);

fn random(rng: &mut Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.uniform_in(-1.0, 1.0))
}

/// Reduces any tensor to a scalar through a fixed random weighting so every
/// output element contributes a distinct sensitivity.
fn project(t: &mut Tape<f64>, y: Var, seed: u64) -> Result<Var> {
    let shape = t.shape(y).to_vec();
    let mut rng = Rng::new(seed);
    let w = t.constant(random(&mut rng, &shape));
    let mut z = t.mul(y, w)?;
    while !t.shape(z).is_empty() {
        z = t.mean_axis(z, 0)?;
    }
    Ok(z)
}

fn check<F>(label: String, tol: f64, params: &[Tensor<f64>], f: F) -> Case
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let err = grad_check(f, params, STEP).unwrap();
    (label, err, tol)
}

pub fn conv2d() -> Vec<Case> {
    let mut rng = Rng::new(1);
    [
        ([2, 3, 5, 5], [4, 3, 3, 3], 1, 1),
        ([1, 2, 6, 7], [3, 2, 3, 3], 2, 1),
        ([2, 1, 4, 4], [2, 1, 2, 2], 1, 0),
    ]
    .into_iter()
    .map(|(xs, ws, stride, pad)| {
        let params = [
            random(&mut rng, &xs),
            random(&mut rng, &ws),
            random(&mut rng, &[ws[0]]),
        ];
        check(
            format!("conv2d {xs:?} {ws:?} s{stride} p{pad}"),
            TOL,
            &params,
            |t, p| {
                let y = t.conv2d(p[0], p[1], Some(p[2]), stride, pad)?;
                project(t, y, 9)
            },
        )
    })
    .collect()
}

pub fn linear_chain() -> Vec<Case> {
    let mut rng = Rng::new(2);
    [(3, 4, 2), (1, 5, 5), (6, 2, 3)]
        .into_iter()
        .map(|(m, k, n)| {
            let params = [
                random(&mut rng, &[m, k]),
                random(&mut rng, &[k, n]),
                random(&mut rng, &[n]),
            ];
            check(
                format!("matmul+bias {m}x{k}x{n}"),
                LINEAR_TOL,
                &params,
                |t, p| {
                    let y = t.matmul(p[0], p[1])?;
                    let y = t.add_bias(y, p[2])?;
                    project(t, y, 3)
                },
            )
        })
        .collect()
}

pub fn batched_matmul() -> Vec<Case> {
    let mut rng = Rng::new(3);
    [(2, 3, 4, 2), (3, 1, 2, 5), (1, 4, 4, 4)]
        .into_iter()
        .map(|(b, m, k, n)| {
            let params = [random(&mut rng, &[b, m, k]), random(&mut rng, &[b, k, n])];
            check(
                format!("bmm {b}x{m}x{k}x{n}"),
                LINEAR_TOL,
                &params,
                |t, p| {
                    let y = t.matmul(p[0], p[1])?;
                    project(t, y, 4)
                },
            )
        })
        .collect()
}

pub fn activations() -> Vec<Case> {
    let mut rng = Rng::new(4);
    let mut out = Vec::new();
    for shape in [vec![7], vec![3, 4], vec![2, 3, 2, 2]] {
        let params = [random(&mut rng, &shape)];
        out.push(check(format!("relu {shape:?}"), TOL, &params, |t, p| {
            let y = t.relu(p[0])?;
            project(t, y, 5)
        }));
        out.push(check(format!("sigmoid {shape:?}"), TOL, &params, |t, p| {
            let y = t.sigmoid(p[0])?;
            project(t, y, 5)
        }));
    }
    out
}

pub fn softmax() -> Vec<Case> {
    let mut rng = Rng::new(5);
    [(vec![4], 0), (vec![3, 5], 1), (vec![2, 3, 4], 1)]
        .into_iter()
        .map(|(shape, axis)| {
            let params = [random(&mut rng, &shape).map(|v| 3.0 * v)];
            check(
                format!("softmax {shape:?} axis {axis}"),
                TOL,
                &params,
                |t, p| {
                    let y = t.softmax(p[0], axis)?;
                    project(t, y, 6)
                },
            )
        })
        .collect()
}

pub fn normalize() -> Vec<Case> {
    let mut rng = Rng::new(6);
    let cases: [(Vec<usize>, NormMode, usize); 4] = [
        (vec![3, 8], NormMode::Layer, 8),
        (vec![2, 3, 5], NormMode::Layer, 5),
        (vec![2, 4, 3, 3], NormMode::Group(2), 4),
        (vec![1, 8, 2, 3], NormMode::Group(4), 8),
    ];
    cases
        .into_iter()
        .map(|(shape, mode, c)| {
            let params = [
                random(&mut rng, &shape),
                random(&mut rng, &[c]),
                random(&mut rng, &[c]),
            ];
            check(
                format!("normalize {shape:?} {mode:?}"),
                TOL,
                &params,
                |t, p| {
                    let y = t.normalize(p[0], mode, p[1], p[2], NORM_EPS)?;
                    project(t, y, 7)
                },
            )
        })
        .collect()
}

pub fn pooling_and_shape() -> Vec<Case> {
    let mut rng = Rng::new(7);
    let mut out = Vec::new();
    for shape in [[1, 2, 3, 3], [2, 3, 2, 4], [3, 1, 5, 1]] {
        let params = [random(&mut rng, &shape)];
        let n = shape.iter().product::<usize>();
        out.push(check(
            format!("global_avg_pool {shape:?}"),
            LINEAR_TOL,
            &params,
            |t, p| {
                let y = t.global_avg_pool(p[0])?;
                project(t, y, 8)
            },
        ));
        out.push(check(
            format!("permute {shape:?}"),
            LINEAR_TOL,
            &params,
            |t, p| {
                let y = t.permute(p[0], &[0, 2, 1, 3])?;
                project(t, y, 8)
            },
        ));
        out.push(check(
            format!("mean_axis {shape:?}"),
            LINEAR_TOL,
            &params,
            |t, p| {
                let y = t.mean_axis(p[0], 2)?;
                project(t, y, 8)
            },
        ));
        out.push(check(
            format!("reshape {shape:?}"),
            LINEAR_TOL,
            &params,
            |t, p| {
                let y = t.reshape(p[0], &[n])?;
                project(t, y, 8)
            },
        ));
    }
    out
}

pub fn elementwise_and_gate() -> Vec<Case> {
    let mut rng = Rng::new(8);
    [[1, 2, 3, 3], [2, 3, 2, 2], [2, 1, 4, 1]]
        .into_iter()
        .map(|shape| {
            let params = [
                random(&mut rng, &shape),
                random(&mut rng, &shape),
                random(&mut rng, &shape[..2]),
            ];
            check(
                format!("add/mul/scale/scale_channels {shape:?}"),
                TOL,
                &params,
                |t, p| {
                    let a = t.add(p[0], p[1])?;
                    let m = t.mul(a, p[0])?;
                    let s = t.scale(m, -1.5)?;
                    let y = t.scale_channels(s, p[2])?;
                    project(t, y, 9)
                },
            )
        })
        .collect()
}

pub fn cross_entropy() -> Vec<Case> {
    let mut rng = Rng::new(9);
    [1, 3, 8]
        .into_iter()
        .map(|n| {
            let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
            let params = [random(&mut rng, &[n, 2]).map(|v| 4.0 * v)];
            check(format!("cross_entropy n={n}"), TOL, &params, |t, p| {
                t.cross_entropy(p[0], &labels)
            })
        })
        .collect()
}

pub fn composite() -> Vec<Case> {
    let mut rng = Rng::new(10);
    let params = [
        random(&mut rng, &[2, 3, 6, 6]),
        random(&mut rng, &[2, 3, 3, 3]),
        random(&mut rng, &[2]),
    ];
    vec![check(
        "conv→relu→pool→cross_entropy".into(),
        TOL,
        &params,
        |t, p| {
            let y = t.conv2d(p[0], p[1], Some(p[2]), 1, 1)?;
            let y = t.relu(y)?;
            let y = t.global_avg_pool(y)?;
            t.cross_entropy(y, &[0, 1])
        },
    )]
}

pub fn full_tiny_model() -> Vec<Case> {
    let p: ModelParams<f64> = build_model(&ModelConfig::tiny(), &mut Rng::new(15))
        .unwrap()
        .cast();
    let names: Vec<String> = p.iter().map(|(n, _)| n.to_string()).collect();
    let params: Vec<Tensor<f64>> = p.iter().map(|(_, t)| t.clone()).collect();
    let input = Tensor::from_fn(&[2, 2, 8, 8], {
        let mut rng = Rng::new(7);
        move |_| rng.normal()
    });
    vec![check(
        "full tiny model".into(),
        TOL,
        &params,
        |tape, vars| {
            let bound = BoundParams::new(names.iter().cloned().zip(vars.iter().copied()));
            let x = tape.constant(input.clone());
            let out = forward(tape, &bound, &p.config, x)?;
            tape.cross_entropy(out.logits_fused, &[0, 1])
        },
    )]
}

pub fn all() -> Vec<Case> {
    [
        conv2d,
        linear_chain,
        batched_matmul,
        activations,
        softmax,
        normalize,
        pooling_and_shape,
        elementwise_and_gate,
        cross_entropy,
        composite,
        full_tiny_model,
    ]
    .iter()
    .flat_map(|f| f())
    .collect()
}
