//! Ranking metrics and the three-regime evaluation protocol.
//!
//! Candidates are scored once per regime: the split's positive hyperedges
//! against an equal number of negatives drawn by SNS, MNS and CNS from
//! seed-derived streams (`eval-sns`, `eval-mns`, `eval-cns`). SNS and MNS
//! negatives match their paired positive's size (clamped to >= 2); CNS
//! sizes follow the perturbed hyperedge. A regime whose sampler exhausts is
//! reported absent with a warning and the averages run over the regimes
//! that remain.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypergraph::{clique_expand, Hypergraph};
use crate::rng::named_stream;
use crate::sampler;

/// Probability that a random positive outscores a random negative, ties
/// counted half (rank-based Mann-Whitney form).
pub fn auroc(pos_scores: &[f64], neg_scores: &[f64]) -> Result<f64> {
    if pos_scores.is_empty() || neg_scores.is_empty() {
        return Err(Error::Parameter("auroc needs nonempty score lists".into()));
    }
    let mut all: Vec<(f64, bool)> = pos_scores
        .iter()
        .map(|&s| (s, true))
        .chain(neg_scores.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        // Tied block occupies ranks i+1..=j; everyone gets the average.
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for item in &all[i..j] {
            if item.1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }
    let n_pos = pos_scores.len() as f64;
    let n_neg = neg_scores.len() as f64;
    let u = rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0;
    Ok(u / (n_pos * n_neg))
}

/// Mean over positives of precision at that positive's rank. Candidates are
/// ordered by descending score; ties keep input order with positives listed
/// before negatives (stable sort), which pins the tie-breaking rule.
pub fn average_precision(pos_scores: &[f64], neg_scores: &[f64]) -> Result<f64> {
    if pos_scores.is_empty() {
        return Err(Error::Parameter("average precision needs at least one positive".into()));
    }
    let mut items: Vec<(f64, bool)> = pos_scores
        .iter()
        .map(|&s| (s, true))
        .chain(neg_scores.iter().map(|&s| (s, false)))
        .collect();
    items.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (idx, item) in items.iter().enumerate() {
        if item.1 {
            hits += 1;
            sum += hits as f64 / (idx + 1) as f64;
        }
    }
    Ok(sum / pos_scores.len() as f64)
}

/// Per-regime metrics of one evaluation pass. A regime absent because its
/// sampler exhausted carries `None`; averages run over the present regimes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub sns_auroc: Option<f64>,
    pub mns_auroc: Option<f64>,
    pub cns_auroc: Option<f64>,
    pub avg_auroc: Option<f64>,
    pub sns_ap: Option<f64>,
    pub mns_ap: Option<f64>,
    pub cns_ap: Option<f64>,
    pub avg_ap: Option<f64>,
    pub epoch: usize,
    pub seed: u64,
}

impl EvalReport {
    pub fn csv_header() -> &'static str {
        "sns_auroc,mns_auroc,cns_auroc,avg_auroc,sns_ap,mns_ap,cns_ap,avg_ap"
    }

    pub fn csv_row(&self) -> String {
        fn cell(v: Option<f64>) -> String {
            v.map(|x| x.to_string()).unwrap_or_default()
        }
        [
            cell(self.sns_auroc),
            cell(self.mns_auroc),
            cell(self.cns_auroc),
            cell(self.avg_auroc),
            cell(self.sns_ap),
            cell(self.mns_ap),
            cell(self.cns_ap),
            cell(self.avg_ap),
        ]
        .join(",")
    }
}

fn mean_present(values: &[Option<f64>]) -> Option<f64> {
    let present: Vec<f64> = values.iter().filter_map(|&v| v).collect();
    if present.is_empty() {
        None
    } else {
        Some(present.iter().sum::<f64>() / present.len() as f64)
    }
}

/// The sampled negative sets of one evaluation, kept for persistence.
#[derive(Debug, Clone, Default)]
pub struct RegimeNegatives {
    pub sns: Option<Vec<Vec<usize>>>,
    pub mns: Option<Vec<Vec<usize>>>,
    pub cns: Option<Vec<Vec<usize>>>,
}

pub struct Evaluation {
    pub report: EvalReport,
    pub negatives: RegimeNegatives,
}

/// Build the three negative test sets for `positives` (one negative per
/// positive) and score everything with `score`. The scorer receives whole
/// candidate batches and returns one score per candidate set.
pub fn evaluate<F>(
    mut score: F,
    h: &Hypergraph,
    positives: &[usize],
    seed: u64,
    epoch: usize,
) -> Result<Evaluation>
where
    F: FnMut(&[Vec<usize>]) -> Result<Vec<f64>>,
{
    if positives.is_empty() {
        return Err(Error::Parameter("evaluation needs at least one positive".into()));
    }
    let expansion = clique_expand(h);
    let pos_sets: Vec<Vec<usize>> = positives.iter().map(|&e| h.edge(e).to_vec()).collect();
    let pos_scores = score(&pos_sets)?;

    let sample_regime = |name: &str| -> Result<Option<Vec<Vec<usize>>>> {
        let mut rng = named_stream(seed, name);
        let mut sets = Vec::with_capacity(pos_sets.len());
        for pos in &pos_sets {
            let n = pos.len().max(2);
            let drawn = match name {
                "eval-sns" => sampler::sns(h, n, &mut rng),
                "eval-mns" => sampler::mns(h, &expansion, n, &mut rng),
                _ => sampler::cns(h, &expansion, &mut rng),
            };
            match drawn {
                Ok(set) => sets.push(set),
                Err(Error::SamplingExhausted(why)) => {
                    log::warn!("{name} exhausted, regime omitted: {why}");
                    return Ok(None);
                }
                Err(other) => return Err(other),
            }
        }
        Ok(Some(sets))
    };

    let mut metrics = |negs: &Option<Vec<Vec<usize>>>| -> Result<(Option<f64>, Option<f64>)> {
        match negs {
            None => Ok((None, None)),
            Some(sets) => {
                let neg_scores = score(sets)?;
                Ok((
                    Some(auroc(&pos_scores, &neg_scores)?),
                    Some(average_precision(&pos_scores, &neg_scores)?),
                ))
            }
        }
    };

    let sns_sets = sample_regime("eval-sns")?;
    let mns_sets = sample_regime("eval-mns")?;
    let cns_sets = sample_regime("eval-cns")?;
    let (sns_auroc, sns_ap) = metrics(&sns_sets)?;
    let (mns_auroc, mns_ap) = metrics(&mns_sets)?;
    let (cns_auroc, cns_ap) = metrics(&cns_sets)?;

    let report = EvalReport {
        sns_auroc,
        mns_auroc,
        cns_auroc,
        avg_auroc: mean_present(&[sns_auroc, mns_auroc, cns_auroc]),
        sns_ap,
        mns_ap,
        cns_ap,
        avg_ap: mean_present(&[sns_ap, mns_ap, cns_ap]),
        epoch,
        seed,
    };
    Ok(Evaluation {
        report,
        negatives: RegimeNegatives { sns: sns_sets, mns: mns_sets, cns: cns_sets },
    })
}

/// Epoch whose validation report maximizes avg AUROC; earliest wins ties.
pub fn select_best(history: &[(usize, EvalReport)]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (epoch, report) in history {
        let score = report.avg_auroc.unwrap_or(f64::NEG_INFINITY);
        let better = match best {
            None => true,
            Some((_, b)) => score > b,
        };
        if better {
            best = Some((*epoch, score));
        }
    }
    best.map(|(e, _)| e)
}

/// Scores a candidate by the fraction of its nodes sharing the modal
/// community label — the sanity scorer for planted benchmarks.
pub fn modal_community_fraction(labels: &[usize], candidate: &[usize]) -> f64 {
    let mut counts: std::collections::BTreeMap<usize, usize> = Default::default();
    for &v in candidate {
        *counts.entry(labels[v]).or_insert(0) += 1;
    }
    let modal = counts.values().copied().max().unwrap_or(0);
    modal as f64 / candidate.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use crate::rng::named_stream;
    use rand::Rng as _;

    // Independent oracles: literal pairwise counting and precision sums.
    fn auroc_oracle(pos: &[f64], neg: &[f64]) -> f64 {
        let mut total = 0.0;
        for &p in pos {
            for &n in neg {
                total += if p > n {
                    1.0
                } else if p == n {
                    0.5
                } else {
                    0.0
                };
            }
        }
        total / (pos.len() * neg.len()) as f64
    }

    fn ap_oracle(pos: &[f64], neg: &[f64]) -> f64 {
        // Explicit (score desc, input index asc) ordering, positives first.
        let mut indexed: Vec<(usize, f64, bool)> = pos
            .iter()
            .enumerate()
            .map(|(i, &s)| (i, s, true))
            .chain(neg.iter().enumerate().map(|(i, &s)| (pos.len() + i, s, false)))
            .collect();
        indexed.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut seen_pos = 0usize;
        let mut acc = 0.0;
        for (rank, item) in indexed.iter().enumerate() {
            if item.2 {
                seen_pos += 1;
                acc += seen_pos as f64 / (rank + 1) as f64;
            }
        }
        acc / pos.len() as f64
    }

    #[test]
    fn auroc_hand_examples() {
        assert_eq!(auroc(&[0.9, 0.8], &[0.1, 0.7]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.9, 0.4], &[0.4, 0.1]).unwrap(), 3.5 / 4.0);
        assert_eq!(auroc(&[0.3, 0.3], &[0.3, 0.3]).unwrap(), 0.5);
        assert!(matches!(auroc(&[], &[0.1]), Err(Error::Parameter(_))));
    }

    #[test]
    fn ap_hand_examples() {
        // Ranked labels [1,0,1,0] → (1/1 + 2/3)/2.
        let v = average_precision(&[0.9, 0.5], &[0.7, 0.1]).unwrap();
        assert!((v - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        // All positives ranked first.
        assert_eq!(average_precision(&[0.9, 0.8], &[0.2, 0.1]).unwrap(), 1.0);
        assert!(matches!(average_precision(&[], &[0.1]), Err(Error::Parameter(_))));
    }

    #[test]
    fn metrics_match_oracles_on_random_instances() {
        let mut rng = named_stream(17, "eval");
        for _ in 0..100 {
            let n_pos = rng.gen_range(1..=10);
            let n_neg = rng.gen_range(1..=10);
            // Quantized scores force plenty of ties.
            let draw = |rng: &mut crate::rng::StreamRng, k: usize| -> Vec<f64> {
                (0..k).map(|_| rng.gen_range(0..5) as f64 / 4.0).collect()
            };
            let pos = draw(&mut rng, n_pos);
            let neg = draw(&mut rng, n_neg);
            let a = auroc(&pos, &neg).unwrap();
            assert!((a - auroc_oracle(&pos, &neg)).abs() <= 1e-12);
            let p = average_precision(&pos, &neg).unwrap();
            assert!((p - ap_oracle(&pos, &neg)).abs() <= 1e-12);
        }
    }

    #[test]
    fn metrics_invariant_under_increasing_transforms() {
        let mut rng = named_stream(23, "eval");
        for _ in 0..50 {
            let pos: Vec<f64> = (0..6).map(|_| rng.gen_range(0..8) as f64 / 7.0).collect();
            let neg: Vec<f64> = (0..7).map(|_| rng.gen_range(0..8) as f64 / 7.0).collect();
            let f = |x: f64| (3.0 * x + 1.0).exp();
            let tp: Vec<f64> = pos.iter().map(|&x| f(x)).collect();
            let tn: Vec<f64> = neg.iter().map(|&x| f(x)).collect();
            assert!(
                (auroc(&pos, &neg).unwrap() - auroc(&tp, &tn).unwrap()).abs() < 1e-12
            );
            assert!(
                (average_precision(&pos, &neg).unwrap() - average_precision(&tp, &tn).unwrap())
                    .abs()
                    < 1e-12
            );
        }
    }

    fn toy_graph() -> Hypergraph {
        let edges = vec![
            vec![0, 1, 2],
            vec![2, 3],
            vec![3, 4, 5],
            vec![0, 5],
            vec![1, 4],
        ];
        Hypergraph::new(edges, Matrix::zeros(6, 1)).unwrap()
    }

    #[test]
    fn evaluation_is_deterministic_and_averages_check_out() {
        let h = toy_graph();
        let scorer = |sets: &[Vec<usize>]| -> Result<Vec<f64>> {
            Ok(sets.iter().map(|s| s.iter().sum::<usize>() as f64 / 10.0).collect())
        };
        let e1 = evaluate(scorer, &h, &[0, 2, 4], 9, 3).unwrap();
        let e2 = evaluate(scorer, &h, &[0, 2, 4], 9, 3).unwrap();
        assert_eq!(e1.report, e2.report);
        let r = &e1.report;
        let expect = (r.sns_auroc.unwrap() + r.mns_auroc.unwrap() + r.cns_auroc.unwrap()) / 3.0;
        assert!((r.avg_auroc.unwrap() - expect).abs() < 1e-15);
        assert_eq!(r.epoch, 3);
        assert_eq!(r.seed, 9);
    }

    #[test]
    fn exhausted_regime_reports_absent() {
        // Two disjoint pairs: CNS has no outside adjacent node, MNS cannot
        // grow to size 3.
        let h = Hypergraph::new(vec![vec![0, 1], vec![2, 3]], Matrix::zeros(4, 1)).unwrap();
        let scorer = |sets: &[Vec<usize>]| -> Result<Vec<f64>> {
            Ok(sets.iter().map(|s| s.len() as f64).collect())
        };
        let e = evaluate(scorer, &h, &[0, 1], 1, 0).unwrap();
        assert!(e.report.cns_auroc.is_none());
        assert!(e.report.sns_auroc.is_some());
        // Average over the present regimes only.
        let present: Vec<f64> =
            [e.report.sns_auroc, e.report.mns_auroc].iter().filter_map(|&v| v).collect();
        let expect = present.iter().sum::<f64>() / present.len() as f64;
        assert!((e.report.avg_auroc.unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn select_best_rules() {
        let rep = |auroc: f64| EvalReport {
            sns_auroc: Some(auroc),
            mns_auroc: Some(auroc),
            cns_auroc: Some(auroc),
            avg_auroc: Some(auroc),
            sns_ap: None,
            mns_ap: None,
            cns_ap: None,
            avg_ap: None,
            epoch: 0,
            seed: 0,
        };
        assert_eq!(select_best(&[(4, rep(0.5))]), Some(4));
        assert_eq!(
            select_best(&[(1, rep(0.6)), (2, rep(0.8)), (3, rep(0.8))]),
            Some(2)
        );
        assert_eq!(
            select_best(&[(1, rep(0.1)), (2, rep(0.2)), (3, rep(0.3))]),
            Some(3)
        );
        assert_eq!(select_best(&[]), None);
    }

    #[test]
    fn report_csv_row_matches_header_shape() {
        let r = EvalReport {
            sns_auroc: Some(0.5),
            mns_auroc: None,
            cns_auroc: Some(0.25),
            avg_auroc: Some(0.375),
            sns_ap: Some(1.0),
            mns_ap: None,
            cns_ap: Some(0.5),
            avg_ap: Some(0.75),
            epoch: 2,
            seed: 7,
        };
        let row = r.csv_row();
        assert_eq!(row.split(',').count(), EvalReport::csv_header().split(',').count());
        assert!(row.contains("0.375"));
        // Absent regimes serialize as empty cells.
        assert!(row.contains(",,"));
    }
}
