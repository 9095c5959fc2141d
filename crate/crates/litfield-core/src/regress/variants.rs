//! Model-variant enumeration.
//!
//! Variants are generated from a base spec by applying, per predictor group,
//! one of: dropping the group, pooling its coefficients across fields,
//! keeping them hierarchical, or adding the shared hyperprior over the group
//! means. The grammar can express far more than the benchmark set; explicit
//! manifests cover anything it cannot.

use serde::{Deserialize, Serialize};

use super::{ModelSpec, Pooling, PredictorSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupOption {
    Drop,
    Pooled,
    Hierarchical,
    HierarchicalHyper,
}

impl GroupOption {
    fn label(&self) -> &'static str {
        match self {
            GroupOption::Drop => "drop",
            GroupOption::Pooled => "pool",
            GroupOption::Hierarchical => "hier",
            GroupOption::HierarchicalHyper => "hier+hyper",
        }
    }
}

/// One axis of variation: a named group of predictor columns and the options
/// explored for it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupAxis {
    pub name: String,
    pub columns: Vec<String>,
    pub options: Vec<GroupOption>,
}

/// Cartesian product of the axes applied to the base spec, in deterministic
/// order (axes outermost-first, options in their given order). With no axes
/// the base spec is returned unchanged.
pub fn enumerate_variants(base: &ModelSpec, axes: &[GroupAxis]) -> Vec<ModelSpec> {
    if axes.is_empty() {
        return vec![base.clone()];
    }
    let axis_columns: Vec<&String> = axes.iter().flat_map(|a| a.columns.iter()).collect();
    let kept: Vec<PredictorSpec> = base
        .predictors
        .iter()
        .filter(|p| !axis_columns.contains(&&p.column))
        .cloned()
        .collect();

    let mut variants = Vec::new();
    let mut choice = vec![0usize; axes.len()];
    loop {
        let mut spec = base.clone();
        spec.predictors = kept.clone();
        let mut name_parts = vec![base.name.clone()];
        for (axis, &opt_idx) in axes.iter().zip(&choice) {
            let option = axis.options[opt_idx];
            name_parts.push(format!("{}={}", axis.name, option.label()));
            match option {
                GroupOption::Drop => {}
                GroupOption::Pooled => {
                    for column in &axis.columns {
                        spec.predictors.push(PredictorSpec {
                            column: column.clone(),
                            pooling: Pooling::Pooled,
                            hyperprior_on_mu: false,
                        });
                    }
                }
                GroupOption::Hierarchical | GroupOption::HierarchicalHyper => {
                    for column in &axis.columns {
                        spec.predictors.push(PredictorSpec {
                            column: column.clone(),
                            pooling: Pooling::Hierarchical,
                            hyperprior_on_mu: option == GroupOption::HierarchicalHyper,
                        });
                    }
                }
            }
        }
        spec.name = name_parts.join("/");
        variants.push(spec);

        // Advance the mixed-radix counter, last axis fastest.
        let mut at = axes.len();
        loop {
            if at == 0 {
                return variants;
            }
            at -= 1;
            choice[at] += 1;
            if choice[at] < axes[at].options.len() {
                break;
            }
            choice[at] = 0;
        }
    }
}

/// The five benchmark models: the intercept-only mean model, hierarchical
/// reference-count and age, and the three per-embedder extensions adding
/// density, asymmetry, or both.
pub fn benchmark_specs(embedders: &[String]) -> Vec<ModelSpec> {
    let rho: Vec<String> = embedders.iter().map(|e| format!("rho_{e}")).collect();
    let alpha: Vec<String> = embedders.iter().map(|e| format!("alpha_{e}")).collect();

    let base = ModelSpec::new("base_mean");

    let mut nref_t = ModelSpec::new("per_field_nref_t");
    nref_t = nref_t.with_hierarchical("n_ref").with_hierarchical("age");

    let mut rho_model = ModelSpec::new("rho_nref_t");
    for column in &rho {
        rho_model = rho_model.with_hierarchical(column.clone());
    }
    rho_model = rho_model.with_hierarchical("n_ref").with_hierarchical("age");

    let mut alpha_model = ModelSpec::new("alpha_nref_t");
    for column in &alpha {
        alpha_model = alpha_model.with_hierarchical(column.clone());
    }
    alpha_model = alpha_model.with_hierarchical("n_ref").with_hierarchical("age");

    let mut both = ModelSpec::new("rho_alpha_nref_t");
    for column in rho.iter().chain(&alpha) {
        both = both.with_hierarchical(column.clone());
    }
    both = both.with_hierarchical("n_ref").with_hierarchical("age");

    vec![base, nref_t, rho_model, alpha_model, both]
}
