use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::graph::{ContentId, DotFilter, GraphStats, UnifiedGraph};
use crate::provenance::ProvenanceStore;
use crate::verify::{
    compare_signatures, signature, trial_balance, Balance, Comparison, DiffLine, ReportSignature, VerifierContext,
};

use super::GateAction;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportFailure {
    pub query: ContentId,
    pub name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diff: Vec<DiffLine>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "kebab-case")]
pub enum ActionOutcome {
    Stats {
        stats: GraphStats,
    },
    DotExport {
        path: String,
    },
    ReportCheck {
        signatures: Vec<ReportSignature>,
        failures: Vec<ReportFailure>,
    },
    TrialBalance {
        balances: BTreeMap<String, Balance>,
        failures: Vec<String>,
    },
    /// Re-hash of every collected snapshot; runs after each collect stage.
    Integrity {
        snapshots: usize,
        failures: Vec<String>,
    },
}

impl ActionOutcome {
    pub fn passed(&self) -> bool {
        match self {
            ActionOutcome::Stats { .. } | ActionOutcome::DotExport { .. } => true,
            ActionOutcome::ReportCheck { failures, .. } => failures.is_empty(),
            ActionOutcome::TrialBalance { failures, .. } | ActionOutcome::Integrity { failures, .. } => {
                failures.is_empty()
            }
        }
    }

    pub fn failures(&self) -> Vec<String> {
        match self {
            ActionOutcome::ReportCheck { failures, .. } => failures
                .iter()
                .map(|f| match &f.error {
                    Some(e) => format!("report {}: {e}", f.name),
                    None => {
                        let keys: Vec<&str> = f.diff.iter().map(|d| d.key.as_str()).collect();
                        format!("report {} differs at {}", f.name, keys.join(", "))
                    }
                })
                .collect(),
            ActionOutcome::TrialBalance { failures, .. } | ActionOutcome::Integrity { failures, .. } => {
                failures.clone()
            }
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateOutcome {
    /// Position in the config's gate list; `None` for the integrity gate.
    pub gate: Option<usize>,
    pub after: usize,
    pub label: String,
    /// Slice name, or `model` after assimilation.
    pub scope: String,
    pub graph: ContentId,
    /// Lines of `provenance.log` visible to this gate.
    pub provenance_start: usize,
    pub provenance_len: usize,
    pub passed: bool,
    pub actions: Vec<ActionOutcome>,
    /// Query state the report check ran with, kept so it can be re-run.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub verifiers: Vec<VerifierContext>,
}

impl GateOutcome {
    pub fn name(&self) -> String {
        format!("{} [{}]", self.label, self.scope)
    }

    pub fn signatures(&self) -> impl Iterator<Item = &ReportSignature> {
        self.actions.iter().flat_map(|a| match a {
            ActionOutcome::ReportCheck { signatures, .. } => signatures.as_slice(),
            _ => &[],
        })
    }
}

/// Report check of every registered query against its baseline signature.
pub fn check_reports(
    graph: &UnifiedGraph,
    store: &ProvenanceStore,
    verifiers: &[&VerifierContext],
    label: &str,
) -> ActionOutcome {
    let mut signatures = Vec::new();
    let mut failures = Vec::new();
    for v in verifiers {
        let baseline = v.baseline.as_deref();
        for (id, q) in &v.queries {
            let fail = |diff, error| ReportFailure {
                query: *id,
                name: q.name.clone(),
                diff,
                error,
            };
            let now = match signature(graph, store, *id, &q.current, label) {
                Ok(s) => s,
                Err(e) => {
                    failures.push(fail(Vec::new(), Some(e.to_string())));
                    continue;
                }
            };
            if let Some(before) = baseline.and_then(|b| v.signature_at(*id, b)) {
                match compare_signatures(before, &now) {
                    Ok(Comparison::Match) => {}
                    Ok(Comparison::Mismatch(diff)) => failures.push(fail(diff, None)),
                    Err(e) => failures.push(fail(Vec::new(), Some(e.to_string()))),
                }
            }
            signatures.push(now);
        }
    }
    ActionOutcome::ReportCheck { signatures, failures }
}

/// Runs a gate's actions. Reads only; DOT output is returned in `files`
/// under paths relative to the workspace.
#[allow(clippy::too_many_arguments)]
pub fn run_gate(
    gate: Option<usize>,
    after: usize,
    actions: &[GateAction],
    scope: &str,
    graph: &UnifiedGraph,
    verifiers: &[&VerifierContext],
    store: &ProvenanceStore,
    files: &mut BTreeMap<PathBuf, Vec<u8>>,
) -> GateOutcome {
    let label = match gate {
        Some(n) => format!("gate-{n}"),
        None => format!("integrity-{after}"),
    };
    let mut outcomes = Vec::new();
    for action in actions {
        outcomes.push(match action {
            GateAction::Stats => ActionOutcome::Stats { stats: graph.stats() },
            GateAction::DotExport => {
                let path = PathBuf::from("reports").join(format!("{label}-{scope}.dot"));
                files.insert(path.clone(), graph.export_dot(&DotFilter::active()).into_bytes());
                ActionOutcome::DotExport {
                    path: path.to_string_lossy().into_owned(),
                }
            }
            GateAction::ReportCheck => check_reports(graph, store, verifiers, &label),
            GateAction::TrialBalance => match trial_balance(graph, None) {
                Ok(balances) => {
                    let failures = balances
                        .iter()
                        .filter(|(_, b)| !b.balanced())
                        .map(|(c, b)| format!("{c}: debits {} != credits {}", b.debit, b.credit))
                        .collect();
                    ActionOutcome::TrialBalance { balances, failures }
                }
                Err(e) => ActionOutcome::TrialBalance {
                    balances: BTreeMap::new(),
                    failures: vec![e.to_string()],
                },
            },
        });
    }
    let keep_verifiers = actions.contains(&GateAction::ReportCheck);
    GateOutcome {
        gate,
        after,
        label,
        scope: scope.to_string(),
        graph: graph.graph_id(),
        provenance_start: 0,
        provenance_len: store.len(),
        passed: outcomes.iter().all(ActionOutcome::passed),
        actions: outcomes,
        verifiers: if keep_verifiers {
            verifiers.iter().map(|v| (*v).clone()).collect()
        } else {
            Vec::new()
        },
    }
}
