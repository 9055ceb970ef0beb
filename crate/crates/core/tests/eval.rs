use nalgebra::{DMatrix, Rotation3};
use npbdaa::eval::{ari, experiment1_report, experiment2_report, gmm_em, kmeans, kmeans_once, pca2, ClusterMethod, FeatureVariant, FitRun, TrialLabels};
use npbdaa::hdphlm::{GibbsState, LetterSpan, UtteranceState, WordSegment};
use npbdaa::synth;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Pair counting over all index pairs.
fn ari_brute(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let (mut both, mut only_a, mut only_b, mut total) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            let sa = a[i] == a[j];
            let sb = b[i] == b[j];
            total += 1.0;
            if sa && sb {
                both += 1.0;
            }
            if sa {
                only_a += 1.0;
            }
            if sb {
                only_b += 1.0;
            }
        }
    }
    let expected = only_a * only_b / total;
    let max = 0.5 * (only_a + only_b);
    if max == expected {
        1.0
    } else {
        (both - expected) / (max - expected)
    }
}

#[test]
fn ari_matches_pair_counting() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let n = rng.random_range(2..=50);
        let ka = rng.random_range(1..=6);
        let kb = rng.random_range(1..=6);
        let a: Vec<usize> = (0..n).map(|_| rng.random_range(0..ka)).collect();
        let b: Vec<usize> = (0..n).map(|_| rng.random_range(0..kb)).collect();
        let got = ari(&a, &b).unwrap();
        let want = ari_brute(&a, &b);
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        assert!((-1.0..=1.0).contains(&got));
    }
}

proptest! {
    #[test]
    fn ari_is_symmetric_and_permutation_invariant(
        pairs in prop::collection::vec((0usize..5, 0usize..5), 2..60),
        shift in 1usize..7,
    ) {
        let a: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let b: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let ab = ari(&a, &b).unwrap();
        prop_assert_eq!(ab, ari(&b, &a).unwrap());
        let relabeled: Vec<usize> = a.iter().map(|&x| (x + shift) % 5 + 10).collect();
        prop_assert!((ari(&relabeled, &b).unwrap() - ab).abs() < 1e-12);
    }
}

fn blobs(seed: u64) -> (DMatrix<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
    let mut rows = Vec::new();
    let mut truth = Vec::new();
    for i in 0..90 {
        let c = i % 3;
        rows.push([
            centers[c][0] + rng.random_range(-0.05..0.05),
            centers[c][1] + rng.random_range(-0.05..0.05),
        ]);
        truth.push(c);
    }
    (DMatrix::from_fn(rows.len(), 2, |i, j| rows[i][j]), truth)
}

#[test]
fn kmeans_separates_blobs_deterministically() {
    let (x, truth) = blobs(2);
    let r = kmeans(&x, 3, 7).unwrap();
    assert_eq!(ari(&r.labels, &truth).unwrap(), 1.0);
    assert_eq!(r, kmeans(&x, 3, 7).unwrap());
    for w in r.objective.windows(2) {
        assert!(w[1] <= w[0] + 1e-12);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let noise = DMatrix::from_fn(200, 2, |_, _| rng.random_range(-1.0..1.0));
    for seed in 0..5 {
        let best = kmeans(&noise, 6, seed).unwrap();
        let once = kmeans_once(&noise, 6, seed).unwrap();
        assert!(best.objective.last().unwrap() <= once.objective.last().unwrap());
    }
    let two = kmeans(&DMatrix::from_row_slice(4, 1, &[0.0, 0.1, 1.0, 1.1]), 2, 0).unwrap();
    assert_eq!(ari(&two.labels, &[0, 0, 1, 1]).unwrap(), 1.0);
}

#[test]
fn gmm_is_monotone_and_exact_for_one_component() {
    let (x, truth) = blobs(3);
    let r = gmm_em(&x, 3, 1).unwrap();
    assert_eq!(ari(&r.labels, &truth).unwrap(), 1.0);
    for w in r.log_likelihood.windows(2) {
        assert!(w[1] >= w[0] - 1e-8, "{} -> {}", w[0], w[1]);
    }
    let one = gmm_em(&x, 1, 1).unwrap();
    let n = x.nrows() as f64;
    let mean = x.row_sum() / n;
    for j in 0..2 {
        assert!((one.components[0].mean[j] - mean[j]).abs() < 1e-12);
    }
    let mut cov = DMatrix::zeros(2, 2);
    for i in 0..x.nrows() {
        let d = x.row(i) - &mean;
        cov += d.transpose() * d;
    }
    cov /= n;
    for r in 0..2 {
        for c in 0..2 {
            let reg = if r == c { 1e-6 } else { 0.0 };
            assert!((one.components[0].cov[(r, c)] - cov[(r, c)] - reg).abs() < 1e-12);
        }
    }
}

#[test]
fn pca_properties() {
    let line = DMatrix::from_fn(20, 3, |i, j| i as f64 * [1.0, 2.0, -1.0][j]);
    let p = pca2(&line).unwrap();
    let v2: f64 = p.projection.column(1).iter().map(|v| v * v).sum::<f64>() / 19.0;
    assert!(v2 < 1e-10);

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = DMatrix::from_fn(50, 3, |_, j| rng.random_range(-1.0..1.0) * (3 - j) as f64);
    let p = pca2(&x).unwrap();
    for c in 0..2 {
        let col = p.projection.column(c);
        let var = col.iter().map(|v| v * v).sum::<f64>() / 49.0;
        assert!((var - p.variances[c]).abs() < 1e-10);
        let lead = p.components.row(c).iter().copied().fold(0.0f64, |m, a| if a.abs() > m.abs() { a } else { m });
        assert!(lead > 0.0);
    }
    let rot = Rotation3::from_euler_angles(0.3, -0.7, 1.1);
    let r = DMatrix::from_fn(3, 3, |i, j| rot.matrix()[(j, i)]);
    let rotated = &x * r;
    let q = pca2(&rotated).unwrap();
    for i in 0..10 {
        for j in 0..10 {
            let d = |m: &DMatrix<f64>| (m.row(i) - m.row(j)).norm();
            assert!((d(&p.projection) - d(&q.projection)).abs() < 1e-8);
        }
    }
}

#[test]
fn frame_labels_follow_segments() {
    let seg = |word, start, spans: Vec<(usize, usize)>| {
        let letters: Vec<LetterSpan> = spans.iter().map(|&(letter, duration)| LetterSpan { letter, duration }).collect();
        WordSegment {
            word,
            start,
            duration: letters.iter().map(|l| l.duration).sum(),
            tentative: Vec::new(),
            letters,
        }
    };
    let state = GibbsState {
        utterances: vec![
            UtteranceState { len: 3, segments: vec![seg(2, 0, vec![(4, 3)])] },
            UtteranceState { len: 5, segments: vec![seg(0, 0, vec![(1, 2), (3, 1)]), seg(1, 3, vec![(1, 2)])] },
        ],
    };
    state.check().unwrap();
    assert_eq!(npbdaa::eval::frame_word_labels(&state), vec![vec![2, 2, 2], vec![0, 0, 0, 1, 1]]);
    assert_eq!(npbdaa::eval::frame_letter_labels(&state), vec![vec![4, 4, 4], vec![1, 1, 3, 1, 1]]);
}

#[test]
fn truth_labels_score_perfectly_and_reports_have_expected_rows() {
    let corpus = synth::generate(&synth::default_config()).unwrap();
    let letters: Vec<Vec<usize>> = corpus.utterances.iter().map(|u| u.letter_truth.clone().unwrap()).collect();
    let words: Vec<Vec<usize>> = corpus.utterances.iter().map(|u| u.word_truth.clone().unwrap()).collect();
    let run = FitRun {
        utterances: (0..corpus.utterances.len()).collect(),
        trials: vec![
            TrialLabels { log_likelihood: 0.0, letters: letters.clone(), words: words.clone() },
            TrialLabels {
                log_likelihood: -1.0,
                letters: letters.iter().map(|l| vec![0; l.len()]).collect(),
                words: words.iter().map(|w| vec![0; w.len()]).collect(),
            },
        ],
        map_trial: 0,
    };
    let rows = experiment2_report(&corpus, &[("truth".to_string(), vec![run])]).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1].letter_ari, Some(1.0));
    assert_eq!(rows[1].word_ari, Some(1.0));
    assert!((rows[0].letter_ari.unwrap() - 0.5).abs() < 1e-12);

    let variants = vec![
        FeatureVariant {
            name: "raw".into(),
            features: corpus.utterances.iter().map(|u| u.features.clone()).collect(),
            per_speaker: false,
        },
        FeatureVariant {
            name: "raw per speaker".into(),
            features: corpus.utterances.iter().map(|u| u.features.clone()).collect(),
            per_speaker: true,
        },
    ];
    let rows = experiment1_report(&corpus, &variants, &[ClusterMethod::KMeans, ClusterMethod::Gmm], 5, 2, 0).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.scored && r.per_trial_letter.len() == 2));
    // within one speaker the letters are well separated
    assert!(rows[2].letter_ari.unwrap() > 0.9);

    let mut unlabeled = corpus.clone();
    unlabeled.utterances[0].letter_truth = None;
    let rows = experiment1_report(&unlabeled, &variants[..1], &[ClusterMethod::KMeans], 5, 1, 0).unwrap();
    assert!(!rows[0].scored);
}
