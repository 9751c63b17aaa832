//! Graph-level building blocks: the spatial attention trunk, temporal
//! attention, confidence channel handling, the ConvLSTM cell, and the
//! non-contextual replacements.

use crate::autodiff::{Graph, Tensor, Var};

/// Weight/bias pair bound into a graph (conv kernels or dense layers).
#[derive(Debug, Clone, Copy)]
pub struct ConvVars {
    pub w: Var,
    pub b: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct NormVars {
    pub gamma: Var,
    pub beta: Var,
}

/// Three-layer conv trunk mapping features to a one-channel mask:
/// the first two layers carry normalization + ReLU, the last maps to a
/// single channel through a sigmoid with no normalization.
#[derive(Debug, Clone, Copy)]
pub struct SpatialAttentionVars {
    pub conv1: ConvVars,
    pub norm1: NormVars,
    pub conv2: ConvVars,
    pub norm2: NormVars,
    pub conv3: ConvVars,
}

/// Channel widths of the spatial attention trunk for `c` input
/// channels: c -> c/2 -> c/4 -> 1 (floored at 1).
pub fn spatial_attention_widths(c: usize) -> (usize, usize) {
    ((c / 2).max(1), (c / 4).max(1))
}

pub fn spatial_attention_forward(g: &mut Graph, x: Var, p: &SpatialAttentionVars) -> Var {
    let pad = |w: Var, g: &Graph| (g.value(w).shape()[2] - 1) / 2;
    let p1 = pad(p.conv1.w, g);
    let y = g.conv2d(x, p.conv1.w, p.conv1.b, 1, p1);
    let y = g.channel_norm(y, p.norm1.gamma, p.norm1.beta);
    let y = g.relu(y);
    let p2 = pad(p.conv2.w, g);
    let y = g.conv2d(y, p.conv2.w, p.conv2.b, 1, p2);
    let y = g.channel_norm(y, p.norm2.gamma, p.norm2.beta);
    let y = g.relu(y);
    let p3 = pad(p.conv3.w, g);
    let y = g.conv2d(y, p.conv3.w, p.conv3.b, 1, p3);
    let y = g.sigmoid(y);
    let (h, w) = (g.value(y).shape()[1], g.value(y).shape()[2]);
    g.reshape(y, &[h, w])
}

/// Two feed-forward layers scoring each timestep against the previous
/// hidden state; softmax over timesteps.
#[derive(Debug, Clone, Copy)]
pub struct TemporalAttentionVars {
    pub f1: ConvVars,
    pub f2: ConvVars,
}

/// Returns (weights over timesteps, weighted sum of the frames).
pub fn temporal_attention_forward(
    g: &mut Graph,
    frames: &[Var],
    h_prev: Var,
    p: &TemporalAttentionVars,
) -> (Var, Var) {
    assert!(!frames.is_empty(), "temporal attention needs frames");
    let hp = g.global_avg_pool(h_prev);
    let mut scores = Vec::with_capacity(frames.len());
    for &f in frames {
        let fp = g.global_avg_pool(f);
        let cat = g.concat(fp, hp);
        let z = g.linear(cat, p.f1.w, p.f1.b);
        let z = g.relu(z);
        let s = g.linear(z, p.f2.w, p.f2.b);
        scores.push(s);
    }
    let stacked = g.stack_scalars(&scores);
    let weights = g.softmax(stacked);
    let mixed = g.weighted_sum(frames, weights);
    (weights, mixed)
}

/// Per-frame temporal confidence weights: the mean of each mask.
pub fn temporal_confidence_weights(g: &mut Graph, masks: &[Var]) -> Var {
    assert!(!masks.is_empty(), "confidence weights need masks");
    let means: Vec<Var> = masks.iter().map(|&m| g.mean_all(m)).collect();
    g.stack_scalars(&means)
}

/// ConvLSTM parameters: one conv over the input and one over the
/// hidden state, each producing the four stacked gate pre-activations.
#[derive(Debug, Clone, Copy)]
pub struct ConvLstmVars {
    pub wx: ConvVars,
    pub wh: ConvVars,
}

/// Canonical ConvLSTM update (gate order i, f, g, o):
/// c' = sigmoid(f)*c + sigmoid(i)*tanh(g); h' = sigmoid(o)*tanh(c').
pub fn conv_lstm_step(
    g: &mut Graph,
    input: Var,
    h: Var,
    c: Var,
    p: &ConvLstmVars,
) -> (Var, Var) {
    let hidden = g.value(h).shape()[0];
    let pad_x = (g.value(p.wx.w).shape()[2] - 1) / 2;
    let pad_h = (g.value(p.wh.w).shape()[2] - 1) / 2;
    let gx = g.conv2d(input, p.wx.w, p.wx.b, 1, pad_x);
    let gh = g.conv2d(h, p.wh.w, p.wh.b, 1, pad_h);
    let gates = g.add(gx, gh);
    let i_raw = g.slice_channels(gates, 0, hidden);
    let f_raw = g.slice_channels(gates, hidden, 2 * hidden);
    let g_raw = g.slice_channels(gates, 2 * hidden, 3 * hidden);
    let o_raw = g.slice_channels(gates, 3 * hidden, 4 * hidden);
    let i = g.sigmoid(i_raw);
    let f = g.sigmoid(f_raw);
    let cand = g.tanh(g_raw);
    let o = g.sigmoid(o_raw);
    let fc = g.mul(f, c);
    let ig = g.mul(i, cand);
    let c_new = g.add(fc, ig);
    let c_act = g.tanh(c_new);
    let h_new = g.mul(o, c_act);
    (h_new, c_new)
}

/// Fixed-offset grid subsample: every `step`-th pixel starting at 0,
/// yielding ceil(H/step) x ceil(W/step) — the same spatial dims the
/// contextual encoder produces for downscale factor `step`.
pub fn subsample_grid(t: &Tensor, step: usize) -> Tensor {
    assert_eq!(t.shape().len(), 3);
    assert!(step >= 1);
    let (c, h, w) = (t.shape()[0], t.shape()[1], t.shape()[2]);
    let ho = h.div_ceil(step);
    let wo = w.div_ceil(step);
    let mut data = Vec::with_capacity(c * ho * wo);
    for ci in 0..c {
        for y in (0..h).step_by(step) {
            for x in (0..w).step_by(step) {
                data.push(t.at3(ci, y, x));
            }
        }
    }
    Tensor::new(&[c, ho, wo], data)
}

/// Per-pixel affine encoder (1x1 kernel): mixes channels only, never
/// neighbouring pixels. The non-contextual substitute for the conv
/// trunk; pair with [`subsample_grid`] for shape parity.
pub fn noncontextual_spatial_forward(g: &mut Graph, x: Var, p: &ConvVars) -> Var {
    debug_assert_eq!(g.value(p.w).shape()[2], 1, "affine encoder must be 1x1");
    g.conv2d(x, p.w, p.b, 1, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{central_diff, max_rel_err};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let n: usize = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    struct AttnTensors {
        c1w: Tensor,
        c1b: Tensor,
        n1g: Tensor,
        n1b: Tensor,
        c2w: Tensor,
        c2b: Tensor,
        n2g: Tensor,
        n2b: Tensor,
        c3w: Tensor,
        c3b: Tensor,
    }

    fn attn_tensors(c: usize, seed: u64) -> AttnTensors {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (c1, c2) = spatial_attention_widths(c);
        AttnTensors {
            c1w: rand_tensor(&mut rng, &[c1, c, 3, 3]),
            c1b: rand_tensor(&mut rng, &[c1]),
            n1g: rand_tensor(&mut rng, &[c1]),
            n1b: rand_tensor(&mut rng, &[c1]),
            c2w: rand_tensor(&mut rng, &[c2, c1, 3, 3]),
            c2b: rand_tensor(&mut rng, &[c2]),
            n2g: rand_tensor(&mut rng, &[c2]),
            n2b: rand_tensor(&mut rng, &[c2]),
            c3w: rand_tensor(&mut rng, &[1, c2, 3, 3]),
            c3b: rand_tensor(&mut rng, &[1]),
        }
    }

    fn bind_attn(g: &mut Graph, t: &AttnTensors) -> SpatialAttentionVars {
        SpatialAttentionVars {
            conv1: ConvVars {
                w: g.leaf(t.c1w.clone()),
                b: g.leaf(t.c1b.clone()),
            },
            norm1: NormVars {
                gamma: g.leaf(t.n1g.clone()),
                beta: g.leaf(t.n1b.clone()),
            },
            conv2: ConvVars {
                w: g.leaf(t.c2w.clone()),
                b: g.leaf(t.c2b.clone()),
            },
            norm2: NormVars {
                gamma: g.leaf(t.n2g.clone()),
                beta: g.leaf(t.n2b.clone()),
            },
            conv3: ConvVars {
                w: g.leaf(t.c3w.clone()),
                b: g.leaf(t.c3b.clone()),
            },
        }
    }

    fn mask_readout(g: &mut Graph, mask: Var, seed: u64) -> Var {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coeffs = rand_tensor(&mut rng, g.value(mask).shape());
        let c = g.leaf(coeffs);
        let prod = g.mul(mask, c);
        g.mean_all(prod)
    }

    #[test]
    fn spatial_attention_zero_params_give_half_masks() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::new(
            &[8, 4, 4],
            (0..128).map(|i| i as f64 * 0.01).collect(),
        ));
        let p = SpatialAttentionVars {
            conv1: ConvVars {
                w: g.leaf(Tensor::zeros(&[4, 8, 3, 3])),
                b: g.leaf(Tensor::zeros(&[4])),
            },
            norm1: NormVars {
                gamma: g.leaf(Tensor::zeros(&[4])),
                beta: g.leaf(Tensor::zeros(&[4])),
            },
            conv2: ConvVars {
                w: g.leaf(Tensor::zeros(&[2, 4, 3, 3])),
                b: g.leaf(Tensor::zeros(&[2])),
            },
            norm2: NormVars {
                gamma: g.leaf(Tensor::zeros(&[2])),
                beta: g.leaf(Tensor::zeros(&[2])),
            },
            conv3: ConvVars {
                w: g.leaf(Tensor::zeros(&[1, 2, 3, 3])),
                b: g.leaf(Tensor::zeros(&[1])),
            },
        };
        let m = spatial_attention_forward(&mut g, x, &p);
        assert_eq!(g.value(m).shape(), &[4, 4]);
        assert!(g.value(m).iter().all(|&v| v == 0.5));
    }

    #[test]
    fn spatial_attention_mask_in_unit_interval_and_grads_check() {
        let c = 6;
        let ts = attn_tensors(c, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x0 = rand_tensor(&mut rng, &[c, 5, 5]);

        let mut g = Graph::new();
        let x = g.leaf(x0.clone());
        let p = bind_attn(&mut g, &ts);
        let m = spatial_attention_forward(&mut g, x, &p);
        assert!(g.value(m).iter().all(|&v| (0.0..=1.0).contains(&v)));
        let loss = mask_readout(&mut g, m, 9);
        let grads = g.backward(loss);

        // Check every trunk parameter and the input against central
        // differences.
        let eval = |ts: &AttnTensors, x0: &Tensor| {
            let mut g = Graph::new();
            let x = g.leaf(x0.clone());
            let p = bind_attn(&mut g, ts);
            let m = spatial_attention_forward(&mut g, x, &p);
            let loss = mask_readout(&mut g, m, 9);
            g.value(loss).item()
        };
        let cases: Vec<(Var, Tensor)> = vec![
            (p.conv1.w, ts.c1w.clone()),
            (p.conv1.b, ts.c1b.clone()),
            (p.norm1.gamma, ts.n1g.clone()),
            (p.norm2.beta, ts.n2b.clone()),
            (p.conv2.w, ts.c2w.clone()),
            (p.conv3.w, ts.c3w.clone()),
            (p.conv3.b, ts.c3b.clone()),
        ];
        for (var, base) in cases {
            let fd = central_diff(
                &base,
                |t| {
                    let mut ts2 = attn_tensors(c, 3);
                    // graft the perturbed tensor into the right slot
                    let slots: Vec<&mut Tensor> = vec![
                        &mut ts2.c1w,
                        &mut ts2.c1b,
                        &mut ts2.n1g,
                        &mut ts2.n2b,
                        &mut ts2.c2w,
                        &mut ts2.c3w,
                        &mut ts2.c3b,
                    ];
                    for slot in slots {
                        if slot.shape() == t.shape() && *slot == base {
                            *slot = t.clone();
                            break;
                        }
                    }
                    eval(&ts2, &x0)
                },
                1e-5,
            );
            let analytic = grads.get(var).expect("param should receive gradient");
            let err = max_rel_err(analytic, &fd);
            assert!(err < 1e-4, "attention gradcheck failed: rel err {err}");
        }

        let fd_x = central_diff(&x0, |t| eval(&ts, t), 1e-5);
        assert!(max_rel_err(grads.get(x).unwrap(), &fd_x) < 1e-4);
    }

    #[test]
    fn temporal_attention_uniform_for_zero_params_and_single_frame() {
        let mut g = Graph::new();
        let frames: Vec<Var> = (0..4)
            .map(|i| g.leaf(Tensor::full(&[3, 2, 2], i as f64)))
            .collect();
        let h = g.leaf(Tensor::zeros(&[3, 2, 2]));
        let p = TemporalAttentionVars {
            f1: ConvVars {
                w: g.leaf(Tensor::zeros(&[4, 6])),
                b: g.leaf(Tensor::zeros(&[4])),
            },
            f2: ConvVars {
                w: g.leaf(Tensor::zeros(&[1, 4])),
                b: g.leaf(Tensor::zeros(&[1])),
            },
        };
        let (w, mixed) = temporal_attention_forward(&mut g, &frames, h, &p);
        assert!(g.value(w).iter().all(|&v| (v - 0.25).abs() < 1e-12));
        // mixed = mean of frames 0..4 = 1.5 everywhere
        assert!(g.value(mixed).iter().all(|&v| (v - 1.5).abs() < 1e-12));

        let single = temporal_attention_forward(&mut g, &frames[..1], h, &p);
        assert_eq!(g.value(single.0).data(), &[1.0]);
    }

    #[test]
    fn temporal_attention_weights_sum_to_one_and_grads_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let c = 4;
        let f1w = rand_tensor(&mut rng, &[5, 2 * c]);
        let f1b = rand_tensor(&mut rng, &[5]);
        let f2w = rand_tensor(&mut rng, &[1, 5]);
        let f2b = rand_tensor(&mut rng, &[1]);
        let frames: Vec<Tensor> = (0..3).map(|_| rand_tensor(&mut rng, &[c, 3, 3])).collect();
        let h0 = rand_tensor(&mut rng, &[c, 3, 3]);

        let eval = |f1w_t: &Tensor| {
            let mut g = Graph::new();
            let fv: Vec<Var> = frames.iter().map(|f| g.leaf(f.clone())).collect();
            let h = g.leaf(h0.clone());
            let p = TemporalAttentionVars {
                f1: ConvVars {
                    w: g.leaf(f1w_t.clone()),
                    b: g.leaf(f1b.clone()),
                },
                f2: ConvVars {
                    w: g.leaf(f2w.clone()),
                    b: g.leaf(f2b.clone()),
                },
            };
            let (w, _) = temporal_attention_forward(&mut g, &fv, h, &p);
            (g.value(w).clone(), g, w)
        };

        let (wv, _, _) = eval(&f1w);
        assert!((wv.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        assert!(wv.iter().all(|&v| v >= 0.0));

        // gradcheck of weights w.r.t. f1 weight matrix
        let (_, g, wvar) = eval(&f1w);
        let mut rng2 = ChaCha8Rng::seed_from_u64(77);
        let coeffs: Vec<f64> = (0..3).map(|_| rng2.random_range(-1.0..1.0)).collect();
        let mut g = g;
        let cvar = g.leaf(Tensor::vector(&coeffs));
        let prod = g.mul(wvar, cvar);
        let loss = g.mean_all(prod);
        let grads = g.backward(loss);
        // find analytic grad for the f1.w leaf: it was the 5th leaf added
        // inside eval; easier to recompute via a self-contained closure.
        let full = |t: &Tensor| {
            let mut g = Graph::new();
            let fv: Vec<Var> = frames.iter().map(|f| g.leaf(f.clone())).collect();
            let h = g.leaf(h0.clone());
            let p = TemporalAttentionVars {
                f1: ConvVars {
                    w: g.leaf(t.clone()),
                    b: g.leaf(f1b.clone()),
                },
                f2: ConvVars {
                    w: g.leaf(f2w.clone()),
                    b: g.leaf(f2b.clone()),
                },
            };
            let (w, _) = temporal_attention_forward(&mut g, &fv, h, &p);
            let cvar = g.leaf(Tensor::vector(&coeffs));
            let prod = g.mul(w, cvar);
            let loss = g.mean_all(prod);
            (g, loss, p.f1.w)
        };
        let (g2, loss2, f1w_var) = full(&f1w);
        let grads2 = g2.backward(loss2);
        let _ = (g, grads, loss);
        let fd = central_diff(
            &f1w,
            |t| {
                let (g, loss, _) = full(t);
                g.value(loss).item()
            },
            1e-5,
        );
        let err = max_rel_err(grads2.get(f1w_var).unwrap(), &fd);
        assert!(err < 1e-4, "temporal attention gradcheck rel err {err}");
    }

    #[test]
    fn temporal_confidence_weights_are_mask_means() {
        let mut g = Graph::new();
        let m0 = g.leaf(Tensor::zeros(&[2, 2]));
        let m1 = g.leaf(Tensor::full(&[2, 2], 1.0));
        let m2 = g.leaf(Tensor::new(&[2, 2], vec![0.0, 1.0, 1.0, 1.0]));
        let w = temporal_confidence_weights(&mut g, &[m0, m1, m2]);
        assert_eq!(g.value(w).data(), &[0.0, 1.0, 0.75]);
    }

    #[test]
    fn conv_lstm_zero_params_zero_state_give_zero_output() {
        let hidden = 3;
        let mut g = Graph::new();
        let x = g.leaf(Tensor::full(&[2, 4, 4], 0.7));
        let h = g.leaf(Tensor::zeros(&[hidden, 4, 4]));
        let c = g.leaf(Tensor::zeros(&[hidden, 4, 4]));
        let p = ConvLstmVars {
            wx: ConvVars {
                w: g.leaf(Tensor::zeros(&[4 * hidden, 2, 3, 3])),
                b: g.leaf(Tensor::zeros(&[4 * hidden])),
            },
            wh: ConvVars {
                w: g.leaf(Tensor::zeros(&[4 * hidden, hidden, 3, 3])),
                b: g.leaf(Tensor::zeros(&[4 * hidden])),
            },
        };
        let (h2, c2) = conv_lstm_step(&mut g, x, h, c, &p);
        assert!(g.value(h2).iter().all(|&v| v == 0.0));
        assert!(g.value(c2).iter().all(|&v| v == 0.0));
        assert_eq!(g.value(h2).shape(), &[hidden, 4, 4]);
    }

    #[test]
    fn conv_lstm_gradients_check_against_finite_differences() {
        let hidden = 2;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x0 = rand_tensor(&mut rng, &[3, 3, 3]);
        let h0 = rand_tensor(&mut rng, &[hidden, 3, 3]);
        let c0 = rand_tensor(&mut rng, &[hidden, 3, 3]);
        let wx0 = rand_tensor(&mut rng, &[4 * hidden, 3, 3, 3]);
        let bx0 = rand_tensor(&mut rng, &[4 * hidden]);
        let wh0 = rand_tensor(&mut rng, &[4 * hidden, hidden, 3, 3]);
        let bh0 = rand_tensor(&mut rng, &[4 * hidden]);

        let run = |wx_t: &Tensor, wh_t: &Tensor, x_t: &Tensor| {
            let mut g = Graph::new();
            let x = g.leaf(x_t.clone());
            let h = g.leaf(h0.clone());
            let c = g.leaf(c0.clone());
            let p = ConvLstmVars {
                wx: ConvVars {
                    w: g.leaf(wx_t.clone()),
                    b: g.leaf(bx0.clone()),
                },
                wh: ConvVars {
                    w: g.leaf(wh_t.clone()),
                    b: g.leaf(bh0.clone()),
                },
            };
            let (h2, _) = conv_lstm_step(&mut g, x, h, c, &p);
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            let coeffs = Tensor::new(
                &[hidden, 3, 3],
                (0..hidden * 9).map(|_| rng.random_range(-1.0..1.0)).collect(),
            );
            let cv = g.leaf(coeffs);
            let prod = g.mul(h2, cv);
            let loss = g.mean_all(prod);
            (g, loss, p, x)
        };

        let (g, loss, p, xv) = run(&wx0, &wh0, &x0);
        let grads = g.backward(loss);
        let fd_wx = central_diff(&wx0, |t| {
            let (g, l, _, _) = run(t, &wh0, &x0);
            g.value(l).item()
        }, 1e-5);
        let fd_wh = central_diff(&wh0, |t| {
            let (g, l, _, _) = run(&wx0, t, &x0);
            g.value(l).item()
        }, 1e-5);
        let fd_x = central_diff(&x0, |t| {
            let (g, l, _, _) = run(&wx0, &wh0, t);
            g.value(l).item()
        }, 1e-5);
        assert!(max_rel_err(grads.get(p.wx.w).unwrap(), &fd_wx) < 1e-4);
        assert!(max_rel_err(grads.get(p.wh.w).unwrap(), &fd_wh) < 1e-4);
        assert!(max_rel_err(grads.get(xv).unwrap(), &fd_x) < 1e-4);
    }

    #[test]
    fn subsample_grid_matches_encoder_dims() {
        let t = Tensor::new(&[1, 7, 10], (0..70).map(|i| i as f64).collect());
        let s = subsample_grid(&t, 2);
        assert_eq!(s.shape(), &[1, 4, 5]);
        assert_eq!(s.at3(0, 0, 0), 0.0);
        assert_eq!(s.at3(0, 1, 0), 20.0);
        assert_eq!(s.at3(0, 0, 1), 2.0);
    }

    #[test]
    fn noncontextual_spatial_identity_and_permutation_equivariance() {
        // identity-initialized 3->3 affine returns the input unchanged
        let x0 = Tensor::new(&[3, 2, 2], (0..12).map(|i| i as f64 * 0.1).collect());
        let mut eye = Tensor::zeros(&[3, 3, 1, 1]);
        for i in 0..3 {
            eye.data_mut()[i * 3 + i] = 1.0;
        }
        let mut g = Graph::new();
        let x = g.leaf(x0.clone());
        let p = ConvVars {
            w: g.leaf(eye.clone()),
            b: g.leaf(Tensor::zeros(&[3])),
        };
        let y = noncontextual_spatial_forward(&mut g, x, &p);
        assert_eq!(g.value(y), &x0);

        // permuting two pixels permutes the same two output pixels
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let w0 = rand_tensor(&mut rng, &[4, 3, 1, 1]);
        let b0 = rand_tensor(&mut rng, &[4]);
        let run = |inp: &Tensor| {
            let mut g = Graph::new();
            let x = g.leaf(inp.clone());
            let p = ConvVars {
                w: g.leaf(w0.clone()),
                b: g.leaf(b0.clone()),
            };
            let y = noncontextual_spatial_forward(&mut g, x, &p);
            g.value(y).clone()
        };
        let a = rand_tensor(&mut rng, &[3, 2, 2]);
        let mut swapped = a.clone();
        for c in 0..3 {
            let i = swapped.idx3(c, 0, 0);
            let j = swapped.idx3(c, 1, 1);
            swapped.data_mut().swap(i, j);
        }
        let ya = run(&a);
        let yb = run(&swapped);
        for c in 0..4 {
            assert_eq!(ya.at3(c, 0, 0), yb.at3(c, 1, 1));
            assert_eq!(ya.at3(c, 1, 1), yb.at3(c, 0, 0));
            assert_eq!(ya.at3(c, 0, 1), yb.at3(c, 0, 1));
        }
    }
}
