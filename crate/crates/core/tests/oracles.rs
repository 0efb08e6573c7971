mod common;

use common::oracle::{self, to_grid};
use common::{chain, random_row, random_tensor, root_channels};
use contimo::metrics::{l2p_l2q, npss, psnr, ssim, ssim_with_range};
use contimo::model::{ActivationKind, ArchConfig, FourierActivation, PaidMlp};
use contimo::motion::{downsample_indices, parse_bvh, Pose, Quat};
use contimo::training::{draw_factor, Adam, TrainConfig};
use contimo::{Graph, Model, MotionSequence, ParamStore, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CASES: u64 = 100;

#[test]
fn psnr_matches_direct_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..CASES {
        let (t, d) = (rng.gen_range(1..12), rng.gen_range(1..8));
        let truth = random_tensor(&mut rng, &[t, d], 3.0);
        let pred = random_tensor(&mut rng, &[t, d], 3.0);
        if oracle::psnr(&to_grid(&pred), &to_grid(&truth)).is_infinite() {
            continue;
        }
        let got = psnr(&pred, &truth).unwrap();
        let want = oracle::psnr(&to_grid(&pred), &to_grid(&truth));
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }
}

#[test]
fn ssim_matches_windowed_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for case in 0..CASES {
        let (t, d) = if case % 4 == 0 { (rng.gen_range(2..11), rng.gen_range(2..11)) } else { (rng.gen_range(11..20), rng.gen_range(11..20)) };
        let truth = random_tensor(&mut rng, &[t, d], 1.0);
        let noise = random_tensor(&mut rng, &[t, d], 0.3);
        let pred = Tensor::new(vec![t, d], truth.data().iter().zip(noise.data()).map(|(a, b)| a + b).collect()).unwrap();
        let range = contimo::metrics::data_range(&truth);
        let got = ssim(&pred, &truth).unwrap();
        let want = oracle::ssim(&to_grid(&pred), &to_grid(&truth), range);
        assert!((got - want).abs() < 1e-6, "{t}×{d}: {got} vs {want}");
    }
}

#[test]
fn ssim_sixteen_square() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = random_tensor(&mut rng, &[16, 16], 1.0);
    let b = random_tensor(&mut rng, &[16, 16], 1.0);
    let got = ssim_with_range(&a, &b, 2.0).unwrap();
    assert!((got - oracle::ssim(&to_grid(&a), &to_grid(&b), 2.0)).abs() < 1e-6);
}

#[test]
fn npss_matches_dft_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..CASES {
        let (t, d) = (rng.gen_range(4..24), rng.gen_range(1..5));
        let truth = random_tensor(&mut rng, &[t, d], 2.0);
        let pred = random_tensor(&mut rng, &[t, d], 2.0);
        let got = npss(&pred, &truth).unwrap();
        let want = oracle::npss(&to_grid(&pred), &to_grid(&truth));
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }
}

#[test]
fn npss_dc_offset_on_one_channel() {
    let t = 16;
    let rows: Vec<Vec<f64>> = (0..t).map(|i| vec![(i as f64 * 0.9).sin(), (i as f64 * 0.4).cos()]).collect();
    let truth = Tensor::from_rows(&rows).unwrap();
    let shifted: Vec<Vec<f64>> = rows.iter().map(|r| vec![r[0] + 0.75, r[1]]).collect();
    let pred = Tensor::from_rows(&shifted).unwrap();
    let got = npss(&pred, &truth).unwrap();
    assert!(got > 0.0);
    assert!((got - oracle::npss(&shifted, &rows)).abs() < 1e-9);
}

#[test]
fn fk_matches_homogeneous_transforms() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..CASES {
        let offsets: Vec<[f64; 3]> = (0..5).map(|_| [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)]).collect();
        let sk = chain(&offsets, root_channels());
        let row = random_row(&mut rng, &sk);
        let global = sk.forward_kinematics(&sk.pose_from_channels(&row).unwrap()).unwrap();
        let (pos, rot) = oracle::fk(&sk, &row);
        for j in 0..5 {
            for (got, want) in global.positions[j].iter().zip(&pos[j]) {
                assert!((got - want).abs() < 1e-9);
            }
            let q = global.rotations[j].to_array();
            let dot: f64 = (0..4).map(|k| q[k] * rot[j][k]).sum();
            assert!(dot.abs() > 1.0 - 1e-9, "joint {j}: {q:?} vs {:?}", rot[j]);
            assert!((q[0] - rot[j][0]).abs() < 1e-9 || rot[j][0].abs() < 1e-6);
        }
    }
}

#[test]
fn l2p_l2q_match_matrix_fk() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..CASES {
        let offsets = [[0.0, 0.0, 0.0], [rng.gen_range(-5.0..5.0), rng.gen_range(1.0..8.0), 0.0]];
        let sk = chain(&offsets, root_channels());
        let truth: Vec<Vec<f64>> = (0..3).map(|_| random_row(&mut rng, &sk)).collect();
        let pred: Vec<Vec<f64>> = (0..3).map(|_| random_row(&mut rng, &sk)).collect();
        let poses = |rows: &[Vec<f64>]| -> Vec<Pose> { rows.iter().map(|r| sk.pose_from_channels(r).unwrap()).collect() };
        let (p, q) = l2p_l2q(&sk, &poses(&pred), &poses(&truth)).unwrap();
        let (po, qo) = oracle::l2p_l2q(&sk, &pred, &truth);
        assert!((p - po).abs() < 1e-9, "{p} vs {po}");
        assert!((q - qo).abs() < 1e-9, "{q} vs {qo}");
    }
}

#[test]
fn cmu_style_file_matches_token_count() {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/cmu_like.bvh")).unwrap();
    let joints = text.split_whitespace().filter(|w| *w == "ROOT" || *w == "JOINT").count();
    let (sk, seq) = parse_bvh(text.as_bytes()).unwrap();
    assert_eq!(sk.len(), joints);
    assert!((seq.fps() - 120.0).abs() < 1e-3);
}

#[test]
fn fourier_activation_matches_term_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let a: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let w: Vec<f64> = (0..16).map(|_| rng.gen_range(-10.0..10.0)).collect();
    let p: Vec<f64> = (0..16).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let act = FourierActivation::new(a.clone(), w.clone(), p.clone());
    let mut want = 0.0;
    for i in 0..16 {
        want += a[i] * (w[i] * 0.37 + p[i]).sin();
    }
    assert!((act.eval(0.37) - want).abs() < 1e-12);
}

#[test]
fn initialized_layer_variance() {
    // With random phases each harmonic contributes Ψ²/2, so the output
    // variance is ζ · E[Ψ²] / 2 = 1/n for fan-in n.
    for fan_in in [1usize, 4, 16] {
        let mut rng = ChaCha8Rng::seed_from_u64(fan_in as u64);
        let mlp = PaidMlp::new("m", vec![fan_in, 64, 1], 16, false, ActivationKind::Fourier).unwrap();
        // Many layer draws, a few unit-variance inputs each.
        let mut samples = Vec::new();
        for draw in 0..200u64 {
            let mut store = ParamStore::new();
            mlp.init(&mut store, &mut ChaCha8Rng::seed_from_u64(1000 + draw), 1.0, 1.0);
            let x = Tensor::new(vec![50, fan_in], (0..50 * fan_in).map(|_| rng.gen_range(-3f64.sqrt()..3f64.sqrt())).collect()).unwrap();
            let mut g = Graph::new();
            let xi = g.constant(x);
            let w = g.constant(store.get("m.l0.weight").unwrap().clone());
            let z = g.matmul(xi, w).unwrap();
            let [a, f, p] = mlp.activation_names(0).map(|n| g.constant(store.get(&n).unwrap().clone()));
            let y = g.fourier(z, a, f, p).unwrap();
            samples.extend_from_slice(g.value(y).data());
        }
        assert!(samples.len() >= 10_000);
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / samples.len() as f64;
        let expected = 1.0 / fan_in as f64;
        assert!((var / expected - 1.0).abs() < 0.15, "fan-in {fan_in}: {var} vs {expected}");
        if fan_in == 1 {
            assert!((0.2..=5.0).contains(&var));
        }
    }
}

#[test]
fn factor_mean() {
    let cfg = TrainConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 100_000;
    let mean = (0..n).map(|_| draw_factor(&cfg, &mut rng)).sum::<f64>() / n as f64;
    assert!((mean - 2.5).abs() < 0.02, "{mean}");
}

#[test]
fn adam_matches_reference_loop() {
    let mut store = ParamStore::new();
    store.insert("x", Tensor::scalar(1.0));
    let mut adam = Adam::new(&store, 0.9, 0.999, 1e-8);
    let (mut x, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
    for step in 1..=500 {
        let mut g = Graph::new();
        let p = g.param("x", store.get("x").unwrap().clone());
        let sq = g.mul(p, p).unwrap();
        let grads = g.gradient(sq).unwrap();
        adam.update(&mut store, &grads, 0.01).unwrap();

        let grad = 2.0 * x;
        m = 0.9 * m + 0.1 * grad;
        v = 0.999 * v + 0.001 * grad * grad;
        let mh = m / (1.0 - 0.9f64.powi(step));
        let vh = v / (1.0 - 0.999f64.powi(step));
        x -= 0.01 * mh / (vh.sqrt() + 1e-8);
    }
    let got = store.get("x").unwrap().item();
    assert!((got - x).abs() < 1e-12);
    assert!(got.abs() < 0.1);
}

#[test]
fn downsample_enumeration() {
    let mut want = Vec::new();
    let mut k = 0;
    loop {
        let i = (k as f64 * 2.5 + 0.5).floor() as usize;
        if i >= 10 {
            break;
        }
        want.push(i);
        k += 1;
    }
    assert_eq!(downsample_indices(10, 2.5).unwrap(), want);
    assert_eq!(want, vec![0, 3, 5, 8]);
}

#[test]
fn clip_grid_enumeration() {
    let rows: Vec<Vec<f64>> = (0..17).map(|i| vec![i as f64]).collect();
    let seq = MotionSequence::from_rows(&rows, 30.0).unwrap();
    let clip = seq.extract_clip(0.5, 3, 5);
    let grid: Vec<usize> = (-2i64..=2).map(|j| (8 + 4 * j) as usize).collect();
    assert_eq!(clip.indices, grid);
    assert_eq!(clip.values, vec![0.0, 4.0, 8.0, 12.0, 16.0]);
}

#[test]
fn feature_offset_table() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let rotations: Vec<Quat> = (0..4)
        .map(|_| Quat::from_axis_angle([rng.gen_range(-1.0..1.0), 1.0, rng.gen_range(-1.0..1.0)], rng.gen_range(-3.0..3.0)))
        .collect();
    let pose = Pose { root_translation: [1.0, 2.0, 3.0], rotations: rotations.clone() };
    let f = pose.to_features();
    assert_eq!(f.len(), 3 + 4 * 4);
    assert_eq!(&f[0..3], &[1.0, 2.0, 3.0]);
    for (j, q) in rotations.iter().enumerate() {
        assert_eq!(&f[3 + 4 * j..7 + 4 * j], &q.to_array());
    }
    assert_eq!(Pose::from_features(&f).unwrap(), pose);
}

fn forward_arch() -> ArchConfig {
    ArchConfig {
        scales: 3,
        harmonics: 4,
        latent: 8,
        token_dim: 4,
        clip_frames: 5,
        encoder_hidden: 6,
        encoder_hidden_layers: 2,
        latent_hidden_layers: 1,
        decoder_hidden: 7,
        decoder_layers: 3,
        seed: 11,
        ..ArchConfig::default()
    }
}

fn plain_forward(model: &Model, seq: &MotionSequence, t: f64) -> Vec<f64> {
    let arch = model.arch();
    let store = model.params();
    let n = seq.len() as i64;
    let mut latents = Vec::new();
    for s in 0..arch.scales {
        let stride = 1i64 << s;
        let center = (t * (n - 1) as f64).round() as i64;
        let mut input = Vec::new();
        let mut offsets = Vec::new();
        for j in -2i64..=2 {
            let grid = center + stride * j;
            input.extend_from_slice(seq.frame(grid.clamp(0, n - 1) as usize));
            offsets.push(grid as f64 / (n - 1) as f64 - t);
        }
        input.extend(offsets);
        input.push(t);
        let r = oracle::mlp_row(store, &format!("enc{s}"), arch.encoder_hidden_layers + 1, false, false, &input);
        latents.push(oracle::mlp_row(store, &format!("paid{s}"), arch.latent_hidden_layers + 1, false, false, &r));
    }
    let mut fused = latents[0].clone();
    for b in 0..arch.scales - 1 {
        fused.extend(oracle::attention_row(store, b, arch.token_dim, &latents[b], &latents[b + 1]));
    }
    fused.push(t);
    oracle::mlp_row(store, "dec", arch.decoder_layers, false, false, &fused)
}

#[test]
fn model_forward_matches_plain_reimplementation() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let rows: Vec<Vec<f64>> = (0..9).map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
    let seq = MotionSequence::from_rows(&rows, 30.0).unwrap();
    let model = Model::new(forward_arch(), 2).unwrap();
    let times = [0.0, 0.13, 0.5, 0.77, 1.0, -0.2, 1.3];
    let got = model.predict(&seq, &times).unwrap();
    for (k, &t) in times.iter().enumerate() {
        let want = plain_forward(&model, &seq, t);
        for (a, b) in got.row(k).iter().zip(&want) {
            assert!((a - b).abs() < 1e-10, "t={t}: {a} vs {b}");
        }
    }
}

#[test]
fn encoder_latents_match_plain_reimplementation() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let rows: Vec<Vec<f64>> = (0..9).map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
    let seq = MotionSequence::from_rows(&rows, 30.0).unwrap();
    let model = Model::new(forward_arch(), 2).unwrap();
    let batch = model.queries(&seq, &[0.4], None).unwrap();
    let mut g = Graph::new();
    let latents = model.encode_multiscale(&mut g, &batch).unwrap();
    assert_eq!(latents.len(), 3);
    for (s, &z) in latents.iter().enumerate() {
        let input = batch.encoder_inputs[s].row(0).to_vec();
        let r = oracle::mlp_row(model.params(), &format!("enc{s}"), 3, false, false, &input);
        let want = oracle::mlp_row(model.params(), &format!("paid{s}"), 2, false, false, &r);
        for (a, b) in g.value(z).data().iter().zip(&want) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}

#[test]
fn two_token_attention_by_hand() {
    let arch = ArchConfig { scales: 2, latent: 4, token_dim: 2, ..forward_arch() };
    let mut model = Model::new(arch, 1).unwrap();
    let mut params = model.params().clone();
    let eye = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    for name in ["query", "key", "value", "output"] {
        *params.get_mut(&format!("att.b0.{name}")).unwrap() = eye.clone();
    }
    model.set_params(params).unwrap();
    let prev = [1.0, 0.0, 0.0, 1.0];
    let cur = [2.0, 0.0, 0.0, 3.0];
    let mut g = Graph::new();
    let z0 = g.constant(Tensor::matrix(1, 4, prev.to_vec()).unwrap());
    let z1 = g.constant(Tensor::matrix(1, 4, cur.to_vec()).unwrap());
    let fused = model.fuse_cross_scale(&mut g, &[z0, z1]).unwrap();
    // Token scores q·k/√2: query (1,0) sees keys (2,0),(0,3) → 2/√2, 0;
    // query (0,1) → 0, 3/√2.
    let s = 2f64.sqrt();
    let w0 = [(2.0 / s).exp(), 1.0];
    let w1 = [1.0, (3.0 / s).exp()];
    let mix = |w: [f64; 2]| {
        let z = w[0] + w[1];
        [w[0] / z * 2.0, w[1] / z * 3.0]
    };
    let (a, b) = (mix(w0), mix(w1));
    let want = [1.0, 0.0, 0.0, 1.0, 2.0 + a[0], a[1], b[0], 3.0 + b[1]];
    for (x, y) in g.value(fused.fused).data().iter().zip(&want) {
        assert!((x - y).abs() < 1e-10, "{x} vs {y}");
    }
}

#[test]
fn decoder_matches_plain_reimplementation() {
    let model = Model::new(forward_arch(), 2).unwrap();
    let width = model.decoder().input_width();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let fused = random_tensor(&mut rng, &[3, width - 1], 1.0);
    let times = [0.1, 0.6, 0.95];
    let mut g = Graph::new();
    let f = g.constant(fused.clone());
    let out = model.decode(&mut g, f, &times).unwrap();
    for (k, &t) in times.iter().enumerate() {
        let mut input = fused.row(k).to_vec();
        input.push(t);
        let want = oracle::mlp_row(model.params(), "dec", 3, false, false, &input);
        for (a, b) in g.value(out).row(k).iter().zip(&want) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}

#[test]
fn losses_match_direct_sums() {
    use contimo::training::{mse_loss, velocity_loss};
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let a = random_tensor(&mut rng, &[4, 3], 2.0);
    let b = random_tensor(&mut rng, &[4, 3], 2.0);
    let mut want = 0.0;
    for i in 0..4 {
        for j in 0..3 {
            want += (a.row(i)[j] - b.row(i)[j]).powi(2);
        }
    }
    assert!((mse_loss(&a, &b).unwrap() - want).abs() < 1e-12);

    let a = random_tensor(&mut rng, &[5, 2], 2.0);
    let b = random_tensor(&mut rng, &[5, 2], 2.0);
    let mut want = 0.0;
    for i in 1..5 {
        for j in 0..2 {
            let da = a.row(i)[j] - a.row(i - 1)[j];
            let db = b.row(i)[j] - b.row(i - 1)[j];
            want += (da - db).powi(2);
        }
    }
    assert!((velocity_loss(&a, &b).unwrap() - want).abs() < 1e-12);
}
