//! Sandbox construction and the API-set detector.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::{ApiId, AppPair};
use crate::static_analysis::StaticCallSet;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sandbox {
    pub app_id: String,
    pub allowed: BTreeSet<ApiId>,
    pub built_with_static: bool,
}

/// Sensitive calls attributed to one app version under one configuration:
/// the union of its dynamic traces, plus its static set when static analysis
/// is enabled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservedCalls {
    pub app_id: String,
    pub apis: BTreeSet<ApiId>,
    pub with_static: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SandboxVerdict {
    pub pair_id: String,
    pub tool: String,
    pub with_static: bool,
    pub offending: BTreeSet<ApiId>,
    pub detected: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SandboxError {
    #[error("pair `{pair_id}`: sandbox was mined from `{sandbox_app}`, not the benign version `{benign_app}`")]
    SandboxMismatch { pair_id: String, sandbox_app: String, benign_app: String },
    #[error("pair `{pair_id}`: observations belong to `{observed_app}`, not the malign version `{malign_app}`")]
    ObservationMismatch { pair_id: String, observed_app: String, malign_app: String },
    #[error("pair `{pair_id}`: sandbox and observations disagree on static analysis")]
    ConfigMismatch { pair_id: String },
    #[error("static call set belongs to `{static_app}`, expected `{app_id}`")]
    StaticMismatch { app_id: String, static_app: String },
}

/// WS when `static_set` is given (allowed = dynamic ∪ static), WOS otherwise.
pub fn build_sandbox(
    app_id: &str,
    dynamic: &BTreeSet<ApiId>,
    static_set: Option<&StaticCallSet>,
) -> Result<Sandbox, SandboxError> {
    let observed = observe(app_id, dynamic, static_set)?;
    Ok(Sandbox { app_id: observed.app_id, allowed: observed.apis, built_with_static: observed.with_static })
}

pub fn observe(
    app_id: &str,
    dynamic: &BTreeSet<ApiId>,
    static_set: Option<&StaticCallSet>,
) -> Result<ObservedCalls, SandboxError> {
    let mut apis = dynamic.clone();
    if let Some(s) = static_set {
        if s.app_id != app_id {
            return Err(SandboxError::StaticMismatch { app_id: app_id.to_owned(), static_app: s.app_id.clone() });
        }
        apis.extend(s.apis.iter().cloned());
    }
    Ok(ObservedCalls { app_id: app_id.to_owned(), apis, with_static: static_set.is_some() })
}

pub fn detect(
    pair: &AppPair,
    sandbox: &Sandbox,
    malign: &ObservedCalls,
    tool: &str,
) -> Result<SandboxVerdict, SandboxError> {
    if sandbox.app_id != pair.benign.id {
        return Err(SandboxError::SandboxMismatch {
            pair_id: pair.pair_id.clone(),
            sandbox_app: sandbox.app_id.clone(),
            benign_app: pair.benign.id.clone(),
        });
    }
    if malign.app_id != pair.malign.id {
        return Err(SandboxError::ObservationMismatch {
            pair_id: pair.pair_id.clone(),
            observed_app: malign.app_id.clone(),
            malign_app: pair.malign.id.clone(),
        });
    }
    if sandbox.built_with_static != malign.with_static {
        return Err(SandboxError::ConfigMismatch { pair_id: pair.pair_id.clone() });
    }
    Ok(verdict(&pair.pair_id, tool, sandbox, &malign.apis))
}

/// Set algebra behind [`detect`], without the id checks.
pub fn verdict(pair_id: &str, tool: &str, sandbox: &Sandbox, malign_apis: &BTreeSet<ApiId>) -> SandboxVerdict {
    let offending: BTreeSet<ApiId> = malign_apis.difference(&sandbox.allowed).cloned().collect();
    SandboxVerdict {
        pair_id: pair_id.to_owned(),
        tool: tool.to_owned(),
        with_static: sandbox.built_with_static,
        detected: !offending.is_empty(),
        offending,
    }
}
