use nalgebra::{DMatrix, DVector};
use npbdaa::hdphlm::{Gaussian, HdpHlmHyper, HdpHlmModel};
use npbdaa::sampler::{
    backward_messages, fit, forward_sample, gibbs_iteration, sample_segment_letters, sir_select,
    word_segment_loglik, FitConfig, LetterLogliks, SirCandidate,
};
use npbdaa::corpus::FeatureSequence;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn lse(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn ln_fact(k: usize) -> f64 {
    (1..=k).map(|i| (i as f64).ln()).sum()
}

// Shifted Poisson with the tail folded into the last bucket, by direct summation.
fn dur_oracle(omega: f64, max_dur: usize, d: usize) -> f64 {
    let pmf = |d: usize| ((d - 1) as f64 * omega.ln() - omega - ln_fact(d - 1)).exp();
    if d < max_dur {
        pmf(d).ln()
    } else {
        (1.0 - (1..max_dur).map(pmf).sum::<f64>()).ln()
    }
}

fn gauss_oracle(mean: f64, var: f64, y: f64) -> f64 {
    -0.5 * (2.0 * std::f64::consts::PI * var).ln() - (y - mean).powi(2) / (2.0 * var)
}

struct Tiny {
    model: HdpHlmModel,
    means: Vec<f64>,
    vars: Vec<f64>,
}

fn random_simplex(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

fn tiny(words: Vec<Vec<usize>>, n_letters: usize, rng: &mut ChaCha8Rng) -> Tiny {
    let nw = words.len();
    let means: Vec<f64> = (0..n_letters).map(|_| rng.random_range(-1.0..1.0)).collect();
    let vars: Vec<f64> = (0..n_letters).map(|_| rng.random_range(0.3..1.5)).collect();
    let model = HdpHlmModel {
        beta_lm: random_simplex(nw, rng),
        pi_lm: (0..nw).map(|_| random_simplex(nw, rng)).collect(),
        words,
        beta_wm: random_simplex(n_letters, rng),
        pi_wm: (0..n_letters).map(|_| random_simplex(n_letters, rng)).collect(),
        emissions: means
            .iter()
            .zip(&vars)
            .map(|(&m, &v)| Gaussian::new(DVector::from_element(1, m), DMatrix::from_element(1, 1, v)).unwrap())
            .collect(),
        omega: (0..n_letters).map(|_| rng.random_range(0.3..3.0)).collect(),
    };
    Tiny { model, means, vars }
}

fn random_word(n_letters: usize, max_len: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let len = rng.random_range(1..=max_len);
    (0..len).map(|_| rng.random_range(0..n_letters)).collect()
}

// Log-probability of every complete path: word sequence plus letter durations.
fn enumerate_paths(t: &Tiny, y: &[f64], max_dur: usize) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    fn letters(
        t: &Tiny,
        y: &[f64],
        max_dur: usize,
        word: usize,
        k: usize,
        pos: usize,
        acc: f64,
        first: usize,
        out: &mut Vec<(usize, f64)>,
    ) {
        let w = &t.model.words[word];
        if k == w.len() {
            if pos == y.len() {
                out.push((first, acc));
            } else {
                for j in 0..t.model.words.len() {
                    let a = acc + t.model.pi_lm[word][j].ln();
                    letters(t, y, max_dur, j, 0, pos, a, first, out);
                }
            }
            return;
        }
        let l = w[k];
        for d in 1..=max_dur {
            if pos + d > y.len() {
                break;
            }
            let e: f64 = y[pos..pos + d].iter().map(|&v| gauss_oracle(t.means[l], t.vars[l], v)).sum();
            let a = acc + dur_oracle(t.model.omega[l], max_dur, d) + e;
            letters(t, y, max_dur, word, k + 1, pos + d, a, first, out);
        }
    }
    for i in 0..t.model.words.len() {
        letters(t, y, max_dur, i, 0, 0, t.model.beta_lm[i].ln(), i, &mut out);
    }
    out
}

fn column(y: &[f64]) -> DMatrix<f64> {
    DMatrix::from_column_slice(y.len(), 1, y)
}

#[test]
fn messages_match_exhaustive_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..40 {
        let n_letters = rng.random_range(1..=2);
        let n_words = rng.random_range(1..=2);
        let words = (0..n_words).map(|_| random_word(n_letters, 2, &mut rng)).collect();
        let t = tiny(words, n_letters, &mut rng);
        let len = rng.random_range(1..=8);
        let max_dur = rng.random_range(1..=4);
        let y: Vec<f64> = (0..len).map(|_| rng.random_range(-1.5..1.5)).collect();
        let paths = enumerate_paths(&t, &y, max_dur);
        let want = lse(&paths.iter().map(|p| p.1).collect::<Vec<_>>());
        let ll = LetterLogliks::new(&column(&y), &t.model).unwrap();
        let table = backward_messages(&ll, &t.model, max_dur);
        let got = table.total_loglik(&t.model);
        if want == f64::NEG_INFINITY {
            assert_eq!(got, want, "case {case}");
        } else {
            assert!((got - want).abs() < 1e-9, "case {case}: {got} vs {want}");
        }
        for i in 0..t.model.words.len() {
            assert_eq!(table.b(len, i), 0.0);
        }
    }
}

fn compositions(len: usize, parts: usize, max_dur: usize) -> Vec<Vec<usize>> {
    if parts == 0 {
        return if len == 0 { vec![vec![]] } else { vec![] };
    }
    let mut out = Vec::new();
    for d in 1..=max_dur.min(len) {
        for mut rest in compositions(len - d, parts - 1, max_dur) {
            rest.insert(0, d);
            out.push(rest);
        }
    }
    out
}

#[test]
fn segment_dp_matches_composition_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let t = tiny(vec![vec![0]], 2, &mut rng);
    let mut words = Vec::new();
    for len in 1..=3usize {
        for code in 0..(1usize << len) {
            words.push((0..len).map(|b| (code >> b) & 1).collect::<Vec<_>>());
        }
    }
    for max_dur in [2, 4, 6] {
        for seg in 1..=6 {
            let y: Vec<f64> = (0..seg).map(|_| rng.random_range(-1.5..1.5)).collect();
            for w in &words {
                let terms: Vec<f64> = compositions(seg, w.len(), max_dur)
                    .into_iter()
                    .map(|c| {
                        let mut pos = 0;
                        let mut acc = 0.0;
                        for (&l, &d) in w.iter().zip(&c) {
                            acc += dur_oracle(t.model.omega[l], max_dur, d);
                            acc += y[pos..pos + d].iter().map(|&v| gauss_oracle(t.means[l], t.vars[l], v)).sum::<f64>();
                            pos += d;
                        }
                        acc
                    })
                    .collect();
                let want = lse(&terms);
                let got = word_segment_loglik(w, &column(&y), &t.model, max_dur).unwrap();
                if want == f64::NEG_INFINITY {
                    assert_eq!(got, want, "{w:?} len {seg}");
                } else {
                    assert!((got - want).abs() < 1e-10, "{w:?} len {seg} D {max_dur}: {got} vs {want}");
                }
            }
        }
    }
}

#[test]
fn identical_words_share_messages() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut t = tiny(vec![vec![0, 1], vec![1], vec![0, 1]], 2, &mut rng);
    t.model.pi_lm[2] = t.model.pi_lm[0].clone();
    let y: Vec<f64> = (0..7).map(|_| rng.random_range(-1.0..1.0)).collect();
    let ll = LetterLogliks::new(&column(&y), &t.model).unwrap();
    let table = backward_messages(&ll, &t.model, 4);
    for s in 0..=7 {
        assert_eq!(table.bstar(s, 0), table.bstar(s, 2));
    }
}

#[test]
fn first_word_frequencies_match_exact_conditional() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let t = tiny(vec![vec![0], vec![1, 0], vec![1]], 2, &mut rng);
    let y = [0.3, -0.2, 0.8, 1.1, -0.4, 0.0];
    let max_dur = 3;
    let paths = enumerate_paths(&t, &y, max_dur);
    let total = lse(&paths.iter().map(|p| p.1).collect::<Vec<_>>());
    let exact: Vec<f64> = (0..3)
        .map(|i| {
            let own: Vec<f64> = paths.iter().filter(|p| p.0 == i).map(|p| p.1).collect();
            (lse(&own) - total).exp()
        })
        .collect();
    let ll = LetterLogliks::new(&column(&y), &t.model).unwrap();
    let table = backward_messages(&ll, &t.model, max_dur);
    let n = 10_000;
    let mut counts = [0usize; 3];
    for _ in 0..n {
        let segs = forward_sample(&ll, &table, &t.model, max_dur, &mut rng).unwrap();
        assert_eq!(segs.iter().map(|s| s.duration).sum::<usize>(), y.len());
        counts[segs[0].word] += 1;
    }
    let chi2: f64 = (0..3)
        .map(|i| {
            let e = exact[i] * n as f64;
            (counts[i] as f64 - e).powi(2) / e
        })
        .sum();
    let p = 1.0 - ChiSquared::new(2.0).unwrap().cdf(chi2);
    assert!(p > 0.01, "chi2 {chi2}, p {p}, counts {counts:?}, exact {exact:?}");
}

#[test]
fn single_word_inventory_and_tiling() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let t = tiny(vec![vec![0, 1]], 2, &mut rng);
    let y: Vec<f64> = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
    let ll = LetterLogliks::new(&column(&y), &t.model).unwrap();
    let table = backward_messages(&ll, &t.model, 6);
    for _ in 0..200 {
        let segs = forward_sample(&ll, &table, &t.model, 6, &mut rng).unwrap();
        let mut pos = 0;
        for s in &segs {
            assert_eq!(s.word, 0);
            assert_eq!(s.start, pos);
            assert_eq!(s.letters.iter().map(|l| l.duration).sum::<usize>(), s.duration);
            pos += s.duration;
        }
        assert_eq!(pos, y.len());
    }
}

#[test]
fn segment_letters_tile_and_find_the_obvious_letter() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let t = tiny(vec![vec![0]], 1, &mut rng);
    let y: Vec<f64> = (0..9).map(|_| rng.random_range(-1.0..1.0)).collect();
    for _ in 0..50 {
        let spans = sample_segment_letters(&column(&y), &t.model, 4, &mut rng).unwrap();
        assert!(spans.iter().all(|s| s.letter == 0));
        assert_eq!(spans.iter().map(|s| s.duration).sum::<usize>(), 9);
    }

    // letter 2 sits far away from the others and from its own frames' rivals
    let mut t = tiny(vec![vec![0]], 3, &mut rng);
    for (l, m) in [(0, -5.0), (1, 0.0), (2, 6.0)] {
        t.model.emissions[l] = Gaussian::new(DVector::from_element(1, m), DMatrix::from_element(1, 1, 0.2)).unwrap();
    }
    t.model.omega = vec![10.0; 3];
    let y: Vec<f64> = (0..12).map(|_| 6.0 + rng.random_range(-0.3..0.3)).collect();
    let n = 2000;
    let mut hits = 0;
    for _ in 0..n {
        let spans = sample_segment_letters(&column(&y), &t.model, 20, &mut rng).unwrap();
        if spans.len() == 1 && spans[0].letter == 2 && spans[0].duration == 12 {
            hits += 1;
        }
    }
    assert!(hits as f64 / n as f64 > 0.95, "{hits}/{n}");
}

#[test]
fn sir_selection_follows_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let one = [SirCandidate { score: -3.0, proposal: -1.0, count: 2 }];
    for _ in 0..100 {
        assert_eq!(sir_select(&one, &mut rng), Some(0));
    }
    let gap = (1e6f64).ln();
    let two = [
        SirCandidate { score: -10.0, proposal: -0.5, count: 1 },
        SirCandidate { score: -10.0 + gap, proposal: -0.5, count: 1 },
    ];
    let n = 100_000;
    let wins = (0..n).filter(|_| sir_select(&two, &mut rng) == Some(1)).count();
    assert!(wins as f64 / n as f64 > 0.999);
    let none = [SirCandidate { score: f64::NEG_INFINITY, proposal: 0.0, count: 1 }];
    assert_eq!(sir_select(&none, &mut rng), None);
}

// Draws utterances from a model: words from the language model, letter
// durations from the truncated tables, frames from the letter Gaussians.
fn generate(model: &HdpHlmModel, max_dur: usize, n_words: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let dur = model.duration_tables(max_dur);
    let pick = |p: &[f64], rng: &mut ChaCha8Rng| {
        let mut u = rng.random::<f64>();
        for (i, &x) in p.iter().enumerate() {
            if u < x {
                return i;
            }
            u -= x;
        }
        p.len() - 1
    };
    let mut rows = Vec::new();
    let mut w = pick(&model.beta_lm, rng);
    for _ in 0..n_words {
        for &l in &model.words[w] {
            let probs: Vec<f64> = dur[l][1..].iter().map(|v| v.exp()).collect();
            let d = 1 + pick(&probs, rng);
            let g = &model.emissions[l];
            for _ in 0..d {
                let z: Vec<f64> = (0..g.dim()).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
                let l_chol = nalgebra::Cholesky::new(g.cov.clone()).unwrap().l();
                let y = &g.mean + l_chol * DVector::from_vec(z);
                rows.push(y.iter().copied().collect::<Vec<_>>());
            }
        }
        w = pick(&model.pi_lm[w], rng);
    }
    let dim = rows[0].len();
    DMatrix::from_fn(rows.len(), dim, |i, j| rows[i][j])
}

fn small_hyper() -> HdpHlmHyper {
    HdpHlmHyper {
        n_words: 3,
        n_letters: 3,
        max_word_len: 3,
        max_dur: 30,
        ..HdpHlmHyper::default()
    }
}

fn rigged(seed: u64) -> (HdpHlmModel, Vec<DMatrix<f64>>) {
    let hyper = small_hyper();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = HdpHlmModel::from_prior(&hyper, 2, &mut rng).unwrap();
    for (l, g) in model.emissions.iter_mut().enumerate() {
        let a = l as f64 * 2.1;
        *g = Gaussian::new(DVector::from_vec(vec![a.cos(), a.sin()]), DMatrix::identity(2, 2) * 0.01).unwrap();
    }
    model.omega = vec![8.0; 3];
    let data = (0..6).map(|_| generate(&model, hyper.max_dur, 3, &mut rng)).collect();
    (model, data)
}

#[test]
fn sweeps_are_deterministic_and_thread_independent() {
    let (model, data) = rigged(1);
    let refs: Vec<&DMatrix<f64>> = data.iter().collect();
    let hyper = small_hyper();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            gibbs_iteration(&refs, &model, &hyper, &mut rng).unwrap()
        })
    };
    let a = run(1);
    let b = run(4);
    assert_eq!(a, b);
    a.state.check().unwrap();
    assert!(a.log_likelihood.is_finite());
}

#[test]
fn rigged_chain_is_stationary() {
    let (model, data) = rigged(2);
    let refs: Vec<&DMatrix<f64>> = data.iter().collect();
    let hyper = small_hyper();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut m = model;
    let mut trace = Vec::new();
    for _ in 0..20 {
        let s = gibbs_iteration(&refs, &m, &hyper, &mut rng).unwrap();
        trace.push(s.log_likelihood);
        m = s.model;
    }
    let (a, b) = trace.split_at(10);
    let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    let var = |x: &[f64]| {
        let m = mean(x);
        x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
    };
    let se = ((var(a) + var(b)) / 10.0).sqrt().max(1e-9);
    let z = (mean(b) - mean(a)) / se;
    assert!(z.abs() < 4.0, "drift z = {z}, trace {trace:?}");
}

#[test]
fn fit_picks_the_best_trial_and_ignores_thread_count() {
    let (_, data) = rigged(3);
    let feats: Vec<FeatureSequence> = data.into_iter().map(|f| FeatureSequence::new(f, 0.01).unwrap()).collect();
    let hyper = small_hyper();
    let cfg = FitConfig { n_trials: 3, n_iters: 3, seed: 10, jobs: 1 };
    let serial = fit(&feats, &hyper, &cfg).unwrap();
    let parallel = fit(&feats, &hyper, &FitConfig { jobs: 4, ..cfg }).unwrap();
    assert_eq!(serial, parallel);
    let best = serial.map_outcome().final_log_likelihood();
    for t in &serial.trials {
        assert!(t.outcome.as_ref().unwrap().final_log_likelihood() <= best);
        assert_eq!(t.seed, 10 + t.trial as u64);
    }
    let single = fit(&feats, &hyper, &FitConfig { n_trials: 1, ..cfg }).unwrap();
    assert_eq!(single.map_trial, 0);
}
