mod common;

use common::{normal_tensor, rows, uniform_tensor};
use unicam_core::cam::Heatmap;
use unicam_core::distcorr::dcor;
use unicam_core::metrics::{extract_features, fss, perturb, perturb_batch, rs, EmbeddingTable, FeatureSource};
use unicam_core::testkit::{gen_fixtures, SplitMix, ToyNet};
use unicam_core::{Error, Tensor};
use unicam_oracles as oracle;

fn labels(values: &[usize]) -> Tensor {
    Tensor::new(vec![values.len()], values.iter().map(|&v| v as f64).collect()).unwrap()
}

#[test]
fn independent_gaussians_have_small_dcor() {
    let mut worst = 0.0f64;
    for seed in 0..100 {
        let mut rng = SplitMix::new(seed);
        let x = normal_tensor(&mut rng, vec![512, 4]);
        let y = normal_tensor(&mut rng, vec![512, 4]);
        worst = worst.max(dcor(&x, &y).unwrap());
    }
    eprintln!("largest dcor^2 over 100 independent pairs: {worst}");
    assert!(worst <= 0.15, "{worst}");
}

#[test]
fn fss_mean_matches_hand_average() {
    let mut rng = SplitMix::new(31);
    let s: Vec<Tensor> = (0..3).map(|j| normal_tensor(&mut rng, vec![6 + j, 5])).collect();
    let b: Vec<Tensor> = (0..3).map(|j| normal_tensor(&mut rng, vec![6 + j, 2])).collect();
    let report = fss(&s, &b).unwrap();
    let want: Vec<f64> = s
        .iter()
        .zip(&b)
        .map(|(x, y)| oracle::dcor2(&rows(x), &rows(y)))
        .collect();
    for (g, w) in report.per_batch.iter().zip(&want) {
        assert!((g - w).abs() <= 1e-12);
    }
    assert!((report.mean - want.iter().sum::<f64>() / 3.0).abs() <= 1e-12);
    assert!((fss(&b, &s).unwrap().mean - report.mean).abs() <= 1e-12);
    assert!((fss(&s, &s).unwrap().mean - 1.0).abs() <= 1e-12);
}

#[test]
fn fss_is_zero_against_constant_features() {
    let mut rng = SplitMix::new(2);
    let s = vec![normal_tensor(&mut rng, vec![6, 3])];
    let b = vec![Tensor::filled(vec![6, 4], 0.5).unwrap()];
    let r = fss(&s, &b).unwrap();
    assert_eq!(r.per_batch, vec![0.0]);
    assert_eq!(r.degenerate_batches, vec![0]);
}

#[test]
fn fss_ignores_translation_and_scaling() {
    let mut rng = SplitMix::new(12);
    let s = vec![normal_tensor(&mut rng, vec![10, 3])];
    let b = vec![normal_tensor(&mut rng, vec![10, 4])];
    let moved = vec![Tensor::new(vec![10, 3], s[0].data().iter().map(|v| 4.0 * v - 2.0).collect()).unwrap()];
    assert!((fss(&s, &b).unwrap().mean - fss(&moved, &b).unwrap().mean).abs() <= 1e-12);
}

#[test]
fn rs_edge_cases() {
    let mut rng = SplitMix::new(4);
    let table = EmbeddingTable::new(normal_tensor(&mut rng, vec![3, 5])).unwrap();
    let l = labels(&[0, 1, 2, 1, 0, 2]);
    let gt = table.gather(&l).unwrap();
    let r = rs(&[gt], std::slice::from_ref(&l), &table).unwrap();
    assert!((r.mean - 1.0).abs() <= 1e-12);

    let feats = normal_tensor(&mut rng, vec![6, 4]);
    let r = rs(std::slice::from_ref(&feats), &[labels(&[2; 6])], &table).unwrap();
    assert_eq!(r.per_batch, vec![0.0]);
    assert_eq!(r.degenerate_batches, vec![0]);

    let err = rs(&[feats], &[labels(&[0, 1, 3, 0, 1, 2])], &table).unwrap_err();
    assert!(
        matches!(err, Error::LabelOutOfRange { .. }) || err.to_string().contains("label"),
        "{err}"
    );
}

#[test]
fn rs_matches_oracle_on_clustered_two_class_batch() {
    let mut rng = SplitMix::new(40);
    let table = EmbeddingTable::new(normal_tensor(&mut rng, vec![2, 8])).unwrap();
    let l = labels(&[0, 1, 0, 1, 0, 1, 0, 1]);
    let feats: Vec<f64> = l
        .data()
        .iter()
        .flat_map(|&c| (0..3).map(|k| if k == 0 { 2.0 * c } else { 0.0 }).collect::<Vec<_>>())
        .map(|v| v + 0.1 * rng.normal())
        .collect();
    let feats = Tensor::new(vec![8, 3], feats).unwrap();
    let r = rs(std::slice::from_ref(&feats), std::slice::from_ref(&l), &table).unwrap();
    let want = oracle::dcor2(&rows(&feats), &rows(&table.gather(&l).unwrap()));
    assert!((r.mean - want).abs() <= 1e-12);
}

#[test]
fn rs_is_invariant_to_class_relabelling() {
    let mut rng = SplitMix::new(50);
    let table_rows = normal_tensor(&mut rng, vec![4, 6]);
    let table = EmbeddingTable::new(table_rows.clone()).unwrap();
    let perm = [2, 0, 3, 1];
    let mut permuted = vec![0.0; table_rows.len()];
    for (old, &new) in perm.iter().enumerate() {
        permuted[new * 6..(new + 1) * 6].copy_from_slice(table_rows.sample(old));
    }
    let permuted = EmbeddingTable::new(Tensor::new(vec![4, 6], permuted).unwrap()).unwrap();
    let feats: Vec<Tensor> = (0..3).map(|_| normal_tensor(&mut rng, vec![9, 5])).collect();
    let ls: Vec<Vec<usize>> = (0..3).map(|_| (0..9).map(|_| rng.below(4)).collect()).collect();
    let a = rs(&feats, &ls.iter().map(|l| labels(l)).collect::<Vec<_>>(), &table).unwrap();
    let relabelled: Vec<Tensor> = ls
        .iter()
        .map(|l| labels(&l.iter().map(|&c| perm[c]).collect::<Vec<_>>()))
        .collect();
    let b = rs(&feats, &relabelled, &permuted).unwrap();
    assert!((a.mean - b.mean).abs() <= 1e-12);
}

#[test]
fn perturb_matches_scalar_loop() {
    let mut rng = SplitMix::new(60);
    let (c, h, w) = (3, 4, 5);
    let image = normal_tensor(&mut rng, vec![c, h, w]);
    let mut heat: Vec<f64> = (0..h * w).map(|_| rng.uniform()).collect();
    heat[7] = 1.0;
    let hm = Heatmap::new(Tensor::new(vec![1, h, w], heat.clone()).unwrap(), true).unwrap();
    let out = perturb(&image, &hm, 0).unwrap();
    for ch in 0..c {
        for p in 0..h {
            for q in 0..w {
                let want = image.get(&[ch, p, q]) * heat[p * w + q];
                assert!((out.get(&[ch, p, q]) - want).abs() <= 1e-15);
            }
        }
    }
    let raw = Heatmap::new(Tensor::filled(vec![1, h, w], 2.0).unwrap(), false).unwrap();
    assert!(matches!(perturb(&image, &raw, 0), Err(Error::Unnormalized(..))));
}

#[test]
fn extracted_features_compose_masking_and_forward() {
    let fx = gen_fixtures(1, 8).unwrap();
    let net = &fx.student_net;
    let mut rng = SplitMix::new(70);
    let mut maps = uniform_tensor(&mut rng, vec![8, 16, 16], 0.0, 1.0).into_data();
    for i in 0..8 {
        maps[i * 256] = 1.0;
    }
    let heats = Heatmap::new(Tensor::new(vec![8, 16, 16], maps).unwrap(), true).unwrap();
    let got = extract_features(Some(FeatureSource::Model(net)), &fx.images, &heats).unwrap();
    for i in 0..8 {
        let img = Tensor::new(vec![1, 16, 16], fx.images.sample(i).to_vec()).unwrap();
        let masked = perturb(&img, &heats, i).unwrap();
        let fw = net.forward(&masked).unwrap();
        assert_eq!(got.sample(i), &fw.a2[..]);
    }

    let ones = Heatmap::new(Tensor::filled(vec![8, 16, 16], 1.0).unwrap(), true).unwrap();
    let plain = extract_features(Some(FeatureSource::Model(net)), &fx.images, &ones).unwrap();
    for i in 0..8 {
        let img = Tensor::new(vec![1, 16, 16], fx.images.sample(i).to_vec()).unwrap();
        assert_eq!(plain.sample(i), &net.forward(&img).unwrap().a2[..]);
    }

    let zeros = Heatmap::new(Tensor::zeros(vec![8, 16, 16]).unwrap(), true).unwrap();
    let blank = extract_features(Some(FeatureSource::Model(net)), &fx.images, &zeros).unwrap();
    for i in 1..8 {
        assert_eq!(blank.sample(i), blank.sample(0));
    }
    assert_eq!(
        perturb_batch(&fx.images, &zeros)
            .unwrap()
            .data()
            .iter()
            .filter(|v| **v != 0.0)
            .count(),
        0
    );
    assert!(matches!(
        extract_features(None, &fx.images, &ones),
        Err(Error::NoFeatureSource(..))
    ));
}

#[test]
fn toynet_features_are_deterministic() {
    let net = ToyNet::random(5, 1, 2);
    let img = Tensor::filled(vec![1, 4, 4], 0.3).unwrap();
    assert_eq!(net.forward(&img).unwrap().a2, net.forward(&img).unwrap().a2);
}
