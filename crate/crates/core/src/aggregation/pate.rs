use crate::accounting::{default_orders, rdp_gaussian, LedgerEntry, PrivacyLedger};
use crate::mechanisms::{gnmax, PrivacyBudget, VoteHistogram};
use crate::rng::RngStream;

use super::ksa::{ksa_select, KeywordExtraction, KsaMethod, KsaOutcome};
use super::{AggregationError, LabelEnsemble, Shot, StudentPrompt, TextEnsemble};

/// A PATE-released label with its privacy charge.
#[derive(Clone, Debug, PartialEq)]
pub struct PateLabel {
    pub label: usize,
    pub histogram: VoteHistogram,
    pub charge: LedgerEntry,
}

/// RDP charge of one GNMax answer: Gaussian RDP `α/(2σ²)` at unit
/// sensitivity, since adding or removing one teacher moves one count by one.
pub fn gnmax_charge(sigma: f64) -> Result<LedgerEntry, AggregationError> {
    Ok(LedgerEntry::rdp("gnmax", rdp_gaussian(sigma, &default_orders())?).with_meta("sigma", sigma))
}

fn vote_histogram<Q: ?Sized, E: LabelEnsemble<Q> + ?Sized>(ensemble: &E, query: &Q) -> Result<VoteHistogram, AggregationError> {
    let domain = ensemble.domain();
    let mut counts = vec![0u64; domain.size()];
    for t in 0..ensemble.n_teachers() {
        let a = ensemble.answer(query, t);
        let slot = counts.get_mut(a).ok_or(AggregationError::AnswerOutOfDomain {
            teacher: t,
            answer: a,
            domain_size: domain.size(),
        })?;
        *slot += 1;
    }
    Ok(VoteHistogram::new(domain.clone(), counts)?)
}

/// Labels `query` by GNMax over the teachers' votes.
pub fn pate_label<Q: ?Sized, E: LabelEnsemble<Q> + ?Sized>(
    ensemble: &E,
    query: &Q,
    sigma: f64,
    rng: &mut RngStream,
) -> Result<PateLabel, AggregationError> {
    let histogram = vote_histogram(ensemble, query)?;
    let label = gnmax(&histogram, sigma, rng)?;
    Ok(PateLabel {
        label,
        histogram,
        charge: gnmax_charge(sigma)?,
    })
}

/// PromptPATE student construction.
///
/// Every public input is labeled with [`pate_label`] (query `i` uses the
/// derived stream `rng.derive(i)`), then `n_shots` examples are chosen by
/// greedy forward selection: each round adds the candidate that maximises
/// `scorer` on the current set plus that candidate, lowest index on ties.
/// The scorer only sees already-labeled public data, so selection costs no
/// further privacy.
pub fn promptpate_build_student<Q, E, F>(
    ensemble: &E,
    public_inputs: &[Q],
    sigma: f64,
    n_shots: usize,
    scorer: F,
    rng: &mut RngStream,
) -> Result<StudentPrompt<Q, usize>, AggregationError>
where
    Q: Clone,
    E: LabelEnsemble<Q> + ?Sized,
    F: Fn(&[Shot<Q, usize>]) -> f64,
{
    if public_inputs.is_empty() {
        return Err(AggregationError::InvalidInput("public input set is empty".into()));
    }
    if n_shots > public_inputs.len() {
        return Err(AggregationError::InvalidInput(format!(
            "requested {n_shots} shots from {} public inputs",
            public_inputs.len()
        )));
    }
    let mut ledger = PrivacyLedger::new();
    let mut labeled = Vec::with_capacity(public_inputs.len());
    for (i, input) in public_inputs.iter().enumerate() {
        let mut qrng = rng.derive(i as u64);
        let l = pate_label(ensemble, input, sigma, &mut qrng)?;
        ledger.push(l.charge.with_meta("query", i));
        labeled.push(Shot {
            input: input.clone(),
            output: l.label,
        });
    }

    let mut chosen: Vec<usize> = Vec::with_capacity(n_shots);
    let mut taken = vec![false; labeled.len()];
    let mut current: Vec<Shot<Q, usize>> = Vec::with_capacity(n_shots);
    for _ in 0..n_shots {
        let mut best: Option<(usize, f64)> = None;
        for (i, shot) in labeled.iter().enumerate() {
            if taken[i] {
                continue;
            }
            current.push(shot.clone());
            let score = scorer(&current);
            current.pop();
            if best.is_none_or(|(_, b)| score > b) {
                best = Some((i, score));
            }
        }
        let (i, _) = best.expect("n_shots <= number of public inputs");
        taken[i] = true;
        chosen.push(i);
        current.push(labeled[i].clone());
    }

    Ok(StudentPrompt {
        shots: current,
        provenance: chosen,
        ledger,
    })
}

/// Settings for [`promptpategen_build_student`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PromptPateGenConfig {
    /// Keywords released per public input.
    pub k: usize,
    pub per_query_budget: PrivacyBudget,
    pub n_shots: usize,
    pub method: KsaMethod,
}

/// PromptPATEGen student construction.
///
/// Public inputs are processed in order. Each one gets a private keyword set
/// from [`ksa_select`] (on `rng.derive(i)`), joined by spaces in rank order as
/// its output. Abstaining inputs are skipped, not retried, and processing
/// stops once `n_shots` shots exist. Every processed input is charged
/// `per_query_budget`, abstained or not.
pub fn promptpategen_build_student<Q, E>(
    ensemble: &E,
    public_inputs: &[Q],
    extraction: &KeywordExtraction,
    config: PromptPateGenConfig,
    rng: &mut RngStream,
) -> Result<StudentPrompt<Q, String>, AggregationError>
where
    Q: Clone,
    E: TextEnsemble<Q> + ?Sized,
{
    if config.n_shots == 0 {
        return Ok(StudentPrompt::empty());
    }
    if public_inputs.len() < config.n_shots {
        return Err(AggregationError::InvalidInput(format!(
            "requested {} shots from {} public inputs",
            config.n_shots,
            public_inputs.len()
        )));
    }
    let mut student = StudentPrompt::empty();
    for (i, input) in public_inputs.iter().enumerate() {
        if student.shots.len() == config.n_shots {
            break;
        }
        let texts: Vec<String> = (0..ensemble.n_teachers()).map(|t| ensemble.respond(input, t)).collect();
        let mut qrng = rng.derive(i as u64);
        let sel = ksa_select(&texts, extraction, config.k, config.per_query_budget, config.method, &mut qrng)?;
        student.ledger.push(sel.charge.with_meta("query", i));
        if let KsaOutcome::Keywords(words) = sel.outcome {
            student.shots.push(Shot {
                input: input.clone(),
                output: words.join(" "),
            });
            student.provenance.push(i);
        }
    }
    if student.shots.is_empty() {
        return Err(AggregationError::StudentConstruction(format!(
            "all {} processed queries abstained",
            student.ledger.len()
        )));
    }
    Ok(student)
}
