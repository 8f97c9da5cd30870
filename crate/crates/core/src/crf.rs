//! Sequence decoders over an `N x L` emission matrix: a linear-chain CRF
//! (forward algorithm in log space, forward-backward marginals, Viterbi) and
//! an independent per-token softmax.
//!
//! A label path `y` scores
//! `start[y_1] + sum_n emissions[n][y_n] + sum_n T[y_{n-1}][y_n] + stop[y_N]`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

/// `log(sum(exp(values)))`, stable for large magnitudes.
pub fn log_sum_exp(values: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.into_iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Borrowed CRF scores.
#[derive(Debug, Clone, Copy)]
pub struct CrfScores<'a> {
    pub transitions: ArrayView2<'a, f64>,
    pub start: ArrayView1<'a, f64>,
    pub stop: ArrayView1<'a, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrfGrads {
    pub emissions: Array2<f64>,
    pub transitions: Array2<f64>,
    pub start: Array1<f64>,
    pub stop: Array1<f64>,
}

pub fn path_score(emissions: ArrayView2<f64>, crf: CrfScores, labels: &[usize]) -> f64 {
    let n = labels.len();
    let mut score = crf.start[labels[0]] + crf.stop[labels[n - 1]];
    for (t, &y) in labels.iter().enumerate() {
        score += emissions[[t, y]];
        if t > 0 {
            score += crf.transitions[[labels[t - 1], y]];
        }
    }
    score
}

fn forward_table(emissions: ArrayView2<f64>, crf: CrfScores) -> Array2<f64> {
    let (n, l) = emissions.dim();
    let mut alpha = Array2::zeros((n, l));
    for j in 0..l {
        alpha[[0, j]] = crf.start[j] + emissions[[0, j]];
    }
    for t in 1..n {
        for j in 0..l {
            let prev = (0..l).map(|i| alpha[[t - 1, i]] + crf.transitions[[i, j]]);
            alpha[[t, j]] = emissions[[t, j]] + log_sum_exp(prev);
        }
    }
    alpha
}

fn backward_table(emissions: ArrayView2<f64>, crf: CrfScores) -> Array2<f64> {
    let (n, l) = emissions.dim();
    let mut beta = Array2::zeros((n, l));
    for i in 0..l {
        beta[[n - 1, i]] = crf.stop[i];
    }
    for t in (0..n - 1).rev() {
        for i in 0..l {
            let next = (0..l).map(|j| crf.transitions[[i, j]] + emissions[[t + 1, j]] + beta[[t + 1, j]]);
            beta[[t, i]] = log_sum_exp(next);
        }
    }
    beta
}

/// Log of the summed exponentiated scores of all `L^N` label paths.
pub fn crf_log_partition(emissions: ArrayView2<f64>, crf: CrfScores) -> f64 {
    assert!(emissions.nrows() > 0, "empty sequence");
    let alpha = forward_table(emissions, crf);
    let last = alpha.nrows() - 1;
    log_sum_exp((0..emissions.ncols()).map(|j| alpha[[last, j]] + crf.stop[j]))
}

/// Negative log-likelihood of `labels`: `log Z - score(labels)`.
pub fn crf_nll(emissions: ArrayView2<f64>, crf: CrfScores, labels: &[usize]) -> f64 {
    (crf_log_partition(emissions, crf) - path_score(emissions, crf, labels)).max(0.0)
}

/// NLL together with its gradient: expected minus observed feature counts.
pub fn crf_nll_grad(emissions: ArrayView2<f64>, crf: CrfScores, labels: &[usize]) -> (f64, CrfGrads) {
    let (n, l) = emissions.dim();
    let alpha = forward_table(emissions, crf);
    let beta = backward_table(emissions, crf);
    let log_z = log_sum_exp((0..l).map(|j| alpha[[n - 1, j]] + crf.stop[j]));

    let mut d_em = Array2::from_shape_fn((n, l), |(t, j)| (alpha[[t, j]] + beta[[t, j]] - log_z).exp());
    let mut d_start = d_em.row(0).to_owned();
    let mut d_stop = d_em.row(n - 1).to_owned();
    let mut d_trans = Array2::zeros((l, l));
    for t in 0..n - 1 {
        for i in 0..l {
            for j in 0..l {
                d_trans[[i, j]] += (alpha[[t, i]] + crf.transitions[[i, j]] + emissions[[t + 1, j]]
                    + beta[[t + 1, j]]
                    - log_z)
                    .exp();
            }
        }
    }
    for (t, &y) in labels.iter().enumerate() {
        d_em[[t, y]] -= 1.0;
        if t > 0 {
            d_trans[[labels[t - 1], y]] -= 1.0;
        }
    }
    d_start[labels[0]] -= 1.0;
    d_stop[labels[n - 1]] -= 1.0;

    let nll = (log_z - path_score(emissions, crf, labels)).max(0.0);
    (
        nll,
        CrfGrads {
            emissions: d_em,
            transitions: d_trans,
            start: d_start,
            stop: d_stop,
        },
    )
}

/// Highest-scoring path. Every max keeps the lowest label index on ties, so
/// among equally scored paths the result has the lowest last label, then the
/// lowest second-to-last label, and so on.
#[allow(clippy::needless_range_loop)]
pub fn viterbi(emissions: ArrayView2<f64>, crf: CrfScores) -> Vec<usize> {
    let (n, l) = emissions.dim();
    assert!(n > 0, "empty sequence");
    let mut score: Vec<f64> = (0..l).map(|j| crf.start[j] + emissions[[0, j]]).collect();
    let mut back = vec![vec![0usize; l]; n];
    for t in 1..n {
        let mut next = vec![0.0; l];
        for j in 0..l {
            let mut best = 0;
            let mut best_score = score[0] + crf.transitions[[0, j]];
            for i in 1..l {
                let s = score[i] + crf.transitions[[i, j]];
                if s > best_score {
                    best = i;
                    best_score = s;
                }
            }
            back[t][j] = best;
            next[j] = best_score + emissions[[t, j]];
        }
        score = next;
    }
    let mut last = 0;
    let mut best = score[0] + crf.stop[0];
    for j in 1..l {
        let s = score[j] + crf.stop[j];
        if s > best {
            best = s;
            last = j;
        }
    }
    let mut path = vec![last; n];
    for t in (1..n).rev() {
        path[t - 1] = back[t][path[t]];
    }
    path
}

/// `sum_n -log softmax(emissions[n])[labels[n]]`.
pub fn softmax_nll(emissions: ArrayView2<f64>, labels: &[usize]) -> f64 {
    labels
        .iter()
        .enumerate()
        .map(|(t, &y)| log_sum_exp(emissions.row(t).iter().copied()) - emissions[[t, y]])
        .sum()
}

pub fn softmax_nll_grad(emissions: ArrayView2<f64>, labels: &[usize]) -> (f64, Array2<f64>) {
    let mut grad = Array2::zeros(emissions.dim());
    let mut loss = 0.0;
    for (t, &y) in labels.iter().enumerate() {
        let row = emissions.row(t);
        let lse = log_sum_exp(row.iter().copied());
        loss += lse - row[y];
        for (j, &e) in row.iter().enumerate() {
            grad[[t, j]] = (e - lse).exp();
        }
        grad[[t, y]] -= 1.0;
    }
    (loss, grad)
}

/// Per-token argmax, lowest index on ties.
pub fn softmax_decode(emissions: ArrayView2<f64>) -> Vec<usize> {
    emissions
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for j in 1..row.len() {
                if row[j] > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}
