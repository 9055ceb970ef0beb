//! Clustering baselines, adjusted Rand index, PCA projection and the
//! experiment report tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{stack_rows, Corpus, FeatureSequence};
use crate::error::{Error, Result};
use crate::hdphlm::{Gaussian, GibbsState};
use crate::math::log_sum_exp;

fn comb2(n: usize) -> f64 {
    let n = n as f64;
    n * (n - 1.0) / 2.0
}

/// Adjusted Rand index between two labelings of the same items.
pub fn ari(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::invalid("ari needs at least two items"));
    }
    let mut table: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut rows: BTreeMap<usize, usize> = BTreeMap::new();
    let mut cols: BTreeMap<usize, usize> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_insert(0) += 1;
        *rows.entry(x).or_insert(0) += 1;
        *cols.entry(y).or_insert(0) += 1;
    }
    let index: f64 = table.values().map(|&n| comb2(n)).sum();
    let sum_a: f64 = rows.values().map(|&n| comb2(n)).sum();
    let sum_b: f64 = cols.values().map(|&n| comb2(n)).sum();
    let expected = sum_a * sum_b / comb2(a.len());
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    /// `k x D`.
    pub centroids: DMatrix<f64>,
    /// Within-cluster sum of squares after every assignment step.
    pub objective: Vec<f64>,
}

fn sq_dist(x: &DMatrix<f64>, i: usize, c: &DMatrix<f64>, j: usize) -> f64 {
    (0..x.ncols()).map(|d| (x[(i, d)] - c[(j, d)]).powi(2)).sum()
}

const KMEANS_MAX_ITERS: usize = 300;
const KMEANS_RESTARTS: usize = 10;
const GMM_MAX_ITERS: usize = 200;
const GMM_REG: f64 = 1e-6;

/// Lloyd's algorithm with k-means++ seeding on the rows of `x`, restarted
/// ten times; the run with the lowest final objective is returned.
pub fn kmeans(x: &DMatrix<f64>, k: usize, seed: u64) -> Result<KMeansResult> {
    check_k(x, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = lloyd(x, k, &mut rng);
    for _ in 1..KMEANS_RESTARTS {
        let run = lloyd(x, k, &mut rng);
        if final_objective(&run) < final_objective(&best) {
            best = run;
        }
    }
    Ok(best)
}

/// A single k-means++ seeded Lloyd run.
pub fn kmeans_once(x: &DMatrix<f64>, k: usize, seed: u64) -> Result<KMeansResult> {
    check_k(x, k)?;
    Ok(lloyd(x, k, &mut ChaCha8Rng::seed_from_u64(seed)))
}

fn check_k(x: &DMatrix<f64>, k: usize) -> Result<()> {
    let n = x.nrows();
    if k == 0 || n < k {
        return Err(Error::invalid(format!("kmeans needs 1 <= k <= N, got k={k}, N={n}")));
    }
    Ok(())
}

fn final_objective(r: &KMeansResult) -> f64 {
    r.objective.last().copied().unwrap_or(f64::INFINITY)
}

fn lloyd(x: &DMatrix<f64>, k: usize, rng: &mut ChaCha8Rng) -> KMeansResult {
    let n = x.nrows();
    let mut centroids = DMatrix::zeros(k, x.ncols());
    let first = rng.random_range(0..n);
    centroids.row_mut(0).copy_from(&x.row(first));
    let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist(x, i, &centroids, 0)).collect();
    for j in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in nearest.iter().enumerate() {
                if u < d {
                    pick = i;
                    break;
                }
                u -= d;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(j).copy_from(&x.row(pick));
        for (i, slot) in nearest.iter_mut().enumerate() {
            *slot = slot.min(sq_dist(x, i, &centroids, j));
        }
    }

    let mut labels = vec![usize::MAX; n];
    let mut objective = Vec::new();
    for _ in 0..KMEANS_MAX_ITERS {
        let mut changed = false;
        let mut obj = 0.0;
        for i in 0..n {
            let (best, d) = (0..k)
                .map(|j| (j, sq_dist(x, i, &centroids, j)))
                .fold((0, f64::INFINITY), |acc, c| if c.1 < acc.1 { c } else { acc });
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
            obj += d;
        }
        objective.push(obj);
        if !changed {
            break;
        }
        let mut sums = DMatrix::zeros(k, x.ncols());
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            let mut row = sums.row_mut(l);
            row += x.row(i);
        }
        for j in 0..k {
            if counts[j] > 0 {
                let mean = sums.row(j) / counts[j] as f64;
                centroids.row_mut(j).copy_from(&mean);
            }
        }
        for j in 0..k {
            if counts[j] == 0 {
                // reseed at the point farthest from its own centroid
                let far = (0..n)
                    .map(|i| (i, sq_dist(x, i, &centroids, labels[i])))
                    .fold((0, -1.0), |acc, c| if c.1 > acc.1 { c } else { acc })
                    .0;
                centroids.row_mut(j).copy_from(&x.row(far));
                labels[far] = j;
            }
        }
    }
    KMeansResult {
        labels,
        centroids,
        objective,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmResult {
    pub labels: Vec<usize>,
    pub weights: Vec<f64>,
    pub components: Vec<Gaussian>,
    /// Total log-likelihood before every M step.
    pub log_likelihood: Vec<f64>,
}

fn regularized_cov(x: &DMatrix<f64>, resp: Option<&[f64]>, mean: &DVector<f64>) -> DMatrix<f64> {
    let d = x.ncols();
    let mut cov = DMatrix::zeros(d, d);
    let mut total = 0.0;
    for i in 0..x.nrows() {
        let w = resp.map_or(1.0, |r| r[i]);
        if w == 0.0 {
            continue;
        }
        let diff = x.row(i).transpose() - mean;
        cov.ger(w, &diff, &diff, 1.0);
        total += w;
    }
    cov /= total;
    for j in 0..d {
        cov[(j, j)] += GMM_REG;
    }
    cov
}

/// EM for a full-covariance Gaussian mixture, initialized from k-means.
pub fn gmm_em(x: &DMatrix<f64>, k: usize, seed: u64) -> Result<GmmResult> {
    let n = x.nrows();
    let init = kmeans_once(x, k, seed)?;
    let data_mean = DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.mean()));
    let data_cov = regularized_cov(x, None, &data_mean);
    let mut resp = vec![vec![0.0; n]; k];
    for (i, &l) in init.labels.iter().enumerate() {
        resp[l][i] = 1.0;
    }
    let mut weights = vec![0.0; k];
    let mut components = Vec::with_capacity(k);
    let mut trace = Vec::new();
    let mut log_p = vec![vec![0.0; k]; n];
    for iter in 0..=GMM_MAX_ITERS {
        // M step
        components.clear();
        for j in 0..k {
            let nk: f64 = resp[j].iter().sum();
            weights[j] = (nk / n as f64).max(f64::MIN_POSITIVE);
            let g = if nk > 1e-10 {
                let mut mean = DVector::zeros(x.ncols());
                for i in 0..n {
                    mean += x.row(i).transpose() * resp[j][i];
                }
                mean /= nk;
                let cov = regularized_cov(x, Some(&resp[j]), &mean);
                Gaussian::new(mean.clone(), cov).or_else(|_| Gaussian::new(mean, data_cov.clone()))?
            } else {
                let mean = init.centroids.row(j).transpose();
                Gaussian::new(mean, data_cov.clone())?
            };
            components.push(g);
        }
        let wsum: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= wsum);
        // E step
        let mut ll = 0.0;
        let mut row = vec![0.0; x.ncols()];
        for i in 0..n {
            for (d, v) in row.iter_mut().enumerate() {
                *v = x[(i, d)];
            }
            for j in 0..k {
                log_p[i][j] = weights[j].ln() + components[j].log_pdf(&row);
            }
            let z = log_sum_exp(&log_p[i]);
            ll += z;
            for j in 0..k {
                resp[j][i] = (log_p[i][j] - z).exp();
            }
        }
        let done = trace
            .last()
            .is_some_and(|&prev: &f64| (ll - prev).abs() <= 1e-10 * prev.abs().max(1.0));
        trace.push(ll);
        if done || iter == GMM_MAX_ITERS {
            break;
        }
    }
    let labels = (0..n)
        .map(|i| {
            (0..k)
                .max_by(|&a, &b| log_p[i][a].total_cmp(&log_p[i][b]))
                .unwrap_or(0)
        })
        .collect();
    Ok(GmmResult {
        labels,
        weights,
        components,
        log_likelihood: trace,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pca2 {
    /// `N x 2`.
    pub projection: DMatrix<f64>,
    /// `2 x D` principal directions.
    pub components: DMatrix<f64>,
    pub variances: [f64; 2],
}

/// Projection of the centered rows onto the top two covariance eigenvectors.
/// Each direction is signed so that its largest-magnitude loading is positive.
pub fn pca2(x: &DMatrix<f64>) -> Result<Pca2> {
    let n = x.nrows();
    if n < 2 || x.ncols() < 2 {
        return Err(Error::invalid("pca2 needs at least two rows and two columns"));
    }
    let mean = DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.mean()));
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..x.ncols()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut components = DMatrix::zeros(2, x.ncols());
    let mut variances = [0.0; 2];
    for (r, &idx) in order.iter().take(2).enumerate() {
        let mut v = eig.eigenvectors.column(idx).into_owned();
        let lead = v.iter().copied().fold(0.0f64, |m, a| if a.abs() > m.abs() { a } else { m });
        if lead < 0.0 {
            v = -v;
        }
        components.row_mut(r).copy_from(&v.transpose());
        variances[r] = eig.eigenvalues[idx].max(0.0);
    }
    let projection = centered * components.transpose();
    Ok(Pca2 {
        projection,
        components,
        variances,
    })
}

/// Per-utterance frame word ids of a sampler state.
pub fn frame_word_labels(state: &GibbsState) -> Vec<Vec<usize>> {
    state.utterances.iter().map(|u| u.frame_words()).collect()
}

/// Per-utterance frame letter ids of a sampler state.
pub fn frame_letter_labels(state: &GibbsState) -> Vec<Vec<usize>> {
    state.utterances.iter().map(|u| u.frame_letters()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClusterMethod {
    KMeans,
    Gmm,
}

impl ClusterMethod {
    pub fn name(self) -> &'static str {
        match self {
            ClusterMethod::KMeans => "k-means",
            ClusterMethod::Gmm => "GMM",
        }
    }

    pub fn cluster(self, x: &DMatrix<f64>, k: usize, seed: u64) -> Result<Vec<usize>> {
        match self {
            ClusterMethod::KMeans => Ok(kmeans(x, k, seed)?.labels),
            ClusterMethod::Gmm => Ok(gmm_em(x, k, seed)?.labels),
        }
    }
}

/// One row of a results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub method: String,
    pub letter_ari: Option<f64>,
    pub word_ari: Option<f64>,
    pub per_trial_letter: Vec<f64>,
    pub per_trial_word: Vec<f64>,
    pub scored: bool,
}

impl EvalRow {
    fn unscored(method: String) -> Self {
        EvalRow {
            method,
            letter_ari: None,
            word_ari: None,
            per_trial_letter: Vec::new(),
            per_trial_word: Vec::new(),
            scored: false,
        }
    }
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Features for one table row, aligned with the corpus utterances.
#[derive(Debug, Clone)]
pub struct FeatureVariant {
    pub name: String,
    pub features: Vec<FeatureSequence>,
    /// Cluster each speaker separately and average the speakers' scores.
    pub per_speaker: bool,
}

fn concat_truth(corpus: &Corpus, utts: &[usize], letters: bool) -> Option<Vec<usize>> {
    let mut out = Vec::new();
    for &u in utts {
        let utt = &corpus.utterances[u];
        let t = if letters { &utt.letter_truth } else { &utt.word_truth };
        out.extend_from_slice(t.as_ref()?);
    }
    Some(out)
}

fn speaker_groups(corpus: &Corpus, per_speaker: bool) -> Vec<Vec<usize>> {
    if !per_speaker {
        return vec![(0..corpus.utterances.len()).collect()];
    }
    (0..corpus.n_speakers)
        .map(|s| {
            corpus
                .utterances
                .iter()
                .enumerate()
                .filter(|(_, u)| u.speaker == s)
                .map(|(i, _)| i)
                .collect::<Vec<_>>()
        })
        .filter(|g| !g.is_empty())
        .collect()
}

/// Frame clustering table: each variant is clustered with each method into
/// `k` clusters over `n_trials` seeds, scored against frame letter labels.
pub fn experiment1_report(
    corpus: &Corpus,
    variants: &[FeatureVariant],
    methods: &[ClusterMethod],
    k: usize,
    n_trials: usize,
    seed: u64,
) -> Result<Vec<EvalRow>> {
    let mut rows = Vec::new();
    for v in variants {
        if v.features.len() != corpus.utterances.len() {
            return Err(Error::invalid(format!("variant {} has wrong utterance count", v.name)));
        }
        for &m in methods {
            let name = format!("{} / {}", v.name, m.name());
            let groups = speaker_groups(corpus, v.per_speaker);
            let truths: Option<Vec<Vec<usize>>> = groups.iter().map(|g| concat_truth(corpus, g, true)).collect();
            let Some(truths) = truths else {
                rows.push(EvalRow::unscored(name));
                continue;
            };
            let mut per_trial = Vec::with_capacity(n_trials);
            for trial in 0..n_trials {
                let mut scores = Vec::new();
                for (g, truth) in groups.iter().zip(&truths) {
                    let x = stack_rows(g.iter().map(|&u| &v.features[u].frames));
                    let labels = m.cluster(&x, k, seed.wrapping_add(trial as u64))?;
                    scores.push(ari(&labels, truth)?);
                }
                per_trial.push(mean(&scores).unwrap_or(f64::NAN));
            }
            rows.push(EvalRow {
                method: name,
                letter_ari: mean(&per_trial),
                word_ari: None,
                per_trial_letter: per_trial,
                per_trial_word: Vec::new(),
                scored: true,
            });
        }
    }
    Ok(rows)
}

/// Frame labels of one fitted chain, per utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialLabels {
    pub log_likelihood: f64,
    pub letters: Vec<Vec<usize>>,
    pub words: Vec<Vec<usize>>,
}

/// One fitted configuration: either a single fit over all utterances, or
/// several fits over disjoint utterance subsets (for instance one per
/// speaker) whose scores are averaged. Trials are matched by index.
#[derive(Debug, Clone)]
pub struct FitRun {
    pub utterances: Vec<usize>,
    pub trials: Vec<TrialLabels>,
    pub map_trial: usize,
}

/// Discovery table: a mean-over-trials row and a MAP row per method.
pub fn experiment2_report(corpus: &Corpus, methods: &[(String, Vec<FitRun>)]) -> Result<Vec<EvalRow>> {
    let mut rows = Vec::new();
    for (name, runs) in methods {
        let truths: Option<Vec<(Vec<usize>, Vec<usize>)>> = runs
            .iter()
            .map(|r| Some((concat_truth(corpus, &r.utterances, true)?, concat_truth(corpus, &r.utterances, false)?)))
            .collect();
        let Some(truths) = truths else {
            rows.push(EvalRow::unscored(name.clone()));
            rows.push(EvalRow::unscored(format!("{name} (MAP)")));
            continue;
        };
        let n_trials = runs.iter().map(|r| r.trials.len()).min().unwrap_or(0);
        let mut letter = Vec::with_capacity(n_trials);
        let mut word = Vec::with_capacity(n_trials);
        let score = |run: &FitRun, t: &TrialLabels, truth: &(Vec<usize>, Vec<usize>)| -> Result<(f64, f64)> {
            if t.letters.len() != run.utterances.len() {
                return Err(Error::invalid("trial labels do not match the run's utterances"));
            }
            let l: Vec<usize> = t.letters.concat();
            let w: Vec<usize> = t.words.concat();
            Ok((ari(&l, &truth.0)?, ari(&w, &truth.1)?))
        };
        for trial in 0..n_trials {
            let mut ls = Vec::new();
            let mut ws = Vec::new();
            for (run, truth) in runs.iter().zip(&truths) {
                let (l, w) = score(run, &run.trials[trial], truth)?;
                ls.push(l);
                ws.push(w);
            }
            letter.push(mean(&ls).unwrap_or(f64::NAN));
            word.push(mean(&ws).unwrap_or(f64::NAN));
        }
        let mut map_l = Vec::new();
        let mut map_w = Vec::new();
        for (run, truth) in runs.iter().zip(&truths) {
            let (l, w) = score(run, &run.trials[run.map_trial], truth)?;
            map_l.push(l);
            map_w.push(w);
        }
        rows.push(EvalRow {
            method: name.clone(),
            letter_ari: mean(&letter),
            word_ari: mean(&word),
            per_trial_letter: letter,
            per_trial_word: word,
            scored: true,
        });
        rows.push(EvalRow {
            method: format!("{name} (MAP)"),
            letter_ari: mean(&map_l),
            word_ari: mean(&map_w),
            per_trial_letter: Vec::new(),
            per_trial_word: Vec::new(),
            scored: true,
        });
    }
    Ok(rows)
}

/// Writes `method,letter_ari,word_ari,status` rows.
pub fn write_report_csv(path: &Path, rows: &[EvalRow]) -> Result<()> {
    let fmt_err = |e: csv::Error| Error::Format(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(fmt_err)?;
    w.write_record(["method", "letter_ari", "word_ari", "status"]).map_err(fmt_err)?;
    let cell = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    for r in rows {
        let status = if r.scored { "scored" } else { "unscored" };
        w.write_record([r.method.as_str(), &cell(r.letter_ari), &cell(r.word_ari), status])
            .map_err(fmt_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22",
    "#17becf",
];

/// PCA scatter of `points` (`N x 2`) as SVG, colored by `colors` and with one
/// marker shape per `markers` value.
pub fn scatter_svg(points: &DMatrix<f64>, colors: &[usize], markers: &[usize], title: &str) -> String {
    let (w, h, pad) = (640.0, 480.0, 40.0);
    let xs = points.column(0);
    let ys = points.column(1);
    let span = |v: f64, lo: f64, hi: f64| if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
    let (x0, x1) = (xs.min(), xs.max());
    let (y0, y1) = (ys.min(), ys.max());
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        w / 2.0,
        escape(title)
    );
    for i in 0..points.nrows() {
        let px = pad + span(xs[i], x0, x1) * (w - 2.0 * pad);
        let py = h - pad - span(ys[i], y0, y1) * (h - 2.0 * pad);
        let color = PALETTE[colors[i] % PALETTE.len()];
        let shape = match markers[i] % 4 {
            0 => format!(r#"<circle cx="{px:.2}" cy="{py:.2}" r="2.5""#),
            1 => format!(r#"<rect x="{:.2}" y="{:.2}" width="5" height="5""#, px - 2.5, py - 2.5),
            2 => format!(
                r#"<polygon points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}""#,
                px,
                py - 3.0,
                px - 3.0,
                py + 2.5,
                px + 3.0,
                py + 2.5
            ),
            _ => format!(
                r#"<polygon points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2} {:.2},{:.2}""#,
                px,
                py - 3.0,
                px + 3.0,
                py,
                px,
                py + 3.0,
                px - 3.0,
                py
            ),
        };
        let _ = writeln!(svg, r#"{shape} fill="{color}" fill-opacity="0.7"/>"#);
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Every `stride`-th frame of the corpus, projected by PCA and drawn colored
/// by truth letter with one marker per speaker.
pub fn corpus_scatter(corpus: &Corpus, features: &[FeatureSequence], max_points: usize, title: &str) -> Result<String> {
    let mut rows = Vec::new();
    let mut colors = Vec::new();
    let mut markers = Vec::new();
    for (u, f) in corpus.utterances.iter().zip(features) {
        let truth = u.letter_truth.clone().unwrap_or_else(|| vec![0; f.len()]);
        for t in 0..f.len() {
            rows.push(f.frames.row(t).into_owned());
            colors.push(truth.get(t).copied().unwrap_or(0));
            markers.push(u.speaker);
        }
    }
    if rows.is_empty() {
        return Err(Error::invalid("nothing to plot"));
    }
    let stride = rows.len().div_ceil(max_points.max(1));
    let keep: Vec<usize> = (0..rows.len()).step_by(stride).collect();
    let x = DMatrix::from_fn(keep.len(), rows[0].len(), |i, j| rows[keep[i]][j]);
    let pca = pca2(&x)?;
    let c: Vec<usize> = keep.iter().map(|&i| colors[i]).collect();
    let m: Vec<usize> = keep.iter().map(|&i| markers[i]).collect();
    Ok(scatter_svg(&pca.projection, &c, &m, title))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ari_closed_form_two_by_two() {
        // contingency [[2,0],[1,1]]: index 1, rows 1+1, cols 3+0, C(4,2)=6
        let expected_idx = 2.0 * 3.0 / 6.0;
        let want = (1.0 - expected_idx) / (0.5 * (2.0 + 3.0) - expected_idx);
        let got = ari(&[0, 0, 1, 1], &[0, 0, 0, 1]).unwrap();
        assert!((got - want).abs() < 1e-15, "{got} vs {want}");
    }

    #[test]
    fn ari_permutation_and_identity() {
        let a = [0, 0, 1, 1, 2, 2, 2];
        let b = [5, 5, 3, 3, 9, 9, 9];
        assert_eq!(ari(&a, &a).unwrap(), 1.0);
        assert_eq!(ari(&a, &b).unwrap(), 1.0);
        assert!(ari(&a, &b[..3]).is_err());
    }

    #[test]
    fn single_cluster_kmeans_is_mean() {
        let x = DMatrix::from_row_slice(4, 2, &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
        let r = kmeans(&x, 1, 0).unwrap();
        assert!((r.centroids[(0, 0)] - 3.0).abs() < 1e-12);
        assert!((r.centroids[(0, 1)] - 4.0).abs() < 1e-12);
    }
}
