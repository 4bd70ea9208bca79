//! Mapping from layer descriptions to per-iteration compute and data-movement
//! cost.
//!
//! Resolution order for a layer: its explicit `cost` override, then a
//! measured entry matching `(kind, hidden_width, out_tokens, params)`, then
//! the analytic rule registered for its kind.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CostPair, Dtypes, LayerSpec, ModelSpec};

/// Analytic cost rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostRule {
    /// Weight-bearing matmul: `2 * W * tokens` FLOPs; weights plus input and
    /// output activations moved.
    Dense,
    /// RMS/LayerNorm: square, accumulate, scale by the reciprocal root and by
    /// the gain, i.e. `4 * H * tokens` FLOPs.
    Norm,
    /// Table lookup: no FLOPs; only the gathered rows and the output move.
    Embedding,
    /// One operation per output element; no weights.
    Elementwise,
}

impl CostRule {
    pub fn apply(self, layer: &LayerSpec, dtypes: Dtypes) -> CostPair {
        let tokens = layer.out_tokens as f64;
        let act = dtypes.activation as f64;
        let in_bytes = tokens * layer.hidden_width as f64 * act;
        let out_bytes = tokens * layer.out_width as f64 * act;
        let weight_bytes = layer.params as f64 * dtypes.weight as f64;
        match self {
            CostRule::Dense => CostPair::new(
                2.0 * layer.params as f64 * tokens,
                weight_bytes + in_bytes + out_bytes,
            ),
            CostRule::Norm => CostPair::new(
                4.0 * layer.hidden_width as f64 * tokens,
                weight_bytes + in_bytes + out_bytes,
            ),
            CostRule::Embedding => CostPair::new(
                0.0,
                tokens * layer.out_width as f64 * dtypes.weight as f64 + out_bytes,
            ),
            CostRule::Elementwise => CostPair::new(tokens * layer.out_width as f64, in_bytes + out_bytes),
        }
    }
}

/// A calibrated cost for one exact layer shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasuredCost {
    pub kind: String,
    pub hidden_width: u64,
    pub out_tokens: u64,
    pub params: u64,
    pub compute: f64,
    pub datamove: f64,
}

impl MeasuredCost {
    fn matches(&self, layer: &LayerSpec) -> bool {
        self.kind == layer.kind
            && self.hidden_width == layer.hidden_width
            && self.out_tokens == layer.out_tokens
            && self.params == layer.params
    }
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostTable {
    /// When loading from a document, start from [`CostTable::default`].
    #[serde(default = "yes")]
    pub extends_default: bool,
    #[serde(default)]
    pub rules: BTreeMap<String, CostRule>,
    #[serde(default)]
    pub measured: Vec<MeasuredCost>,
}

impl Default for CostTable {
    fn default() -> Self {
        use CostRule::*;
        let rules = [
            ("patch-embed", Dense),
            ("attention", Dense),
            ("mlp-up", Dense),
            ("mlp-down", Dense),
            ("linear", Dense),
            ("lm-head", Dense),
            ("lstm-cell", Dense),
            ("dit-block-sublayer", Dense),
            ("norm", Norm),
            ("embed", Embedding),
            ("detok", Elementwise),
            ("diffusion-step", Elementwise),
        ]
        .into_iter()
        .map(|(k, r)| (k.to_string(), r))
        .collect();
        CostTable {
            extends_default: true,
            rules,
            measured: Vec::new(),
        }
    }
}

impl CostTable {
    pub fn empty() -> Self {
        CostTable {
            extends_default: false,
            rules: BTreeMap::new(),
            measured: Vec::new(),
        }
    }

    pub fn with_rule(mut self, kind: impl Into<String>, rule: CostRule) -> Self {
        self.rules.insert(kind.into(), rule);
        self
    }

    pub fn with_measured(mut self, entry: MeasuredCost) -> Self {
        self.measured.push(entry);
        self
    }

    /// Parses a cost-table document; with `extends_default` (the default) its
    /// rules and measurements are layered over the builtin rules.
    pub fn from_toml_str(src: &str) -> Result<Self> {
        let doc: CostTable = toml::from_str(src).map_err(|e| Error::parse("cost table", e))?;
        if !doc.extends_default {
            return Ok(doc);
        }
        let mut table = CostTable::default();
        table.rules.extend(doc.rules);
        table.measured = doc.measured;
        Ok(table)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("cost table serializes")
    }

    pub fn resolves(&self, layer: &LayerSpec) -> bool {
        layer.cost.is_some()
            || self.rules.contains_key(&layer.kind)
            || self.measured.iter().any(|m| m.matches(layer))
    }

    /// Cost of one iteration of `layer`; callers multiply by `repeat_count`.
    pub fn layer_cost(&self, layer: &LayerSpec, dtypes: Dtypes) -> Result<CostPair> {
        if let Some(c) = layer.cost {
            return Ok(c);
        }
        if let Some(m) = self.measured.iter().find(|m| m.matches(layer)) {
            return Ok(CostPair::new(m.compute, m.datamove));
        }
        match self.rules.get(&layer.kind) {
            Some(rule) => Ok(rule.apply(layer, dtypes)),
            None => Err(Error::UnknownLayerKind {
                layer: layer.id,
                kind: layer.kind.clone(),
            }),
        }
    }

    /// Layer ids whose kind does not resolve.
    pub fn unresolved(&self, spec: &ModelSpec) -> Vec<usize> {
        spec.layers
            .iter()
            .filter(|l| !self.resolves(l))
            .map(|l| l.id)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SegmentKind;

    fn linear(params: u64, tokens: u64, width: u64) -> LayerSpec {
        LayerSpec {
            id: 0,
            segment: SegmentKind::Backbone,
            block_index: 0,
            kind: "linear".into(),
            hidden_width: width,
            out_tokens: tokens,
            out_width: width,
            params,
            repeat_count: 1,
            cost: None,
        }
    }

    #[test]
    fn dense_default_rule() {
        let layer = linear(1_000_000, 17, 768);
        let c = CostTable::default()
            .layer_cost(&layer, Dtypes::default())
            .unwrap();
        assert_eq!(c.compute, 34_000_000.0);
        assert_eq!(c.datamove, 2_052_224.0);
    }

    #[test]
    fn override_wins() {
        let mut layer = linear(1_000_000, 17, 768);
        layer.kind = "nonexistent".into();
        layer.cost = Some(CostPair::new(5e9, 1_048_576.0));
        for table in [CostTable::default(), CostTable::empty()] {
            let c = table.layer_cost(&layer, Dtypes::default()).unwrap();
            assert_eq!(c, CostPair::new(5e9, 1_048_576.0));
        }
    }

    #[test]
    fn norm_matches_hand_count() {
        // Hand oracle for RMSNorm over H = 4096 on a single token:
        // x*x (H mults), running sum (H adds), x*rsqrt (H mults), *gamma (H mults).
        let h: u64 = 4096;
        let mut flops = 0u64;
        for _ in 0..h {
            flops += 1; // square
            flops += 1; // accumulate
        }
        for _ in 0..h {
            flops += 1; // normalise
            flops += 1; // gain
        }
        let weight_bytes = h * 2;
        let act_bytes = 2 * (h * 2);

        let mut layer = linear(h, 1, h);
        layer.kind = "norm".into();
        let c = CostTable::default()
            .layer_cost(&layer, Dtypes::default())
            .unwrap();
        assert_eq!(c.compute, flops as f64);
        assert_eq!(c.datamove, (weight_bytes + act_bytes) as f64);
        assert_eq!(c.compute, 16_384.0);
        assert_eq!(c.datamove, 24_576.0);
    }

    #[test]
    fn measured_entry_beats_rule() {
        let layer = linear(1_000_000, 17, 768);
        let table = CostTable::default().with_measured(MeasuredCost {
            kind: "linear".into(),
            hidden_width: 768,
            out_tokens: 17,
            params: 1_000_000,
            compute: 1.0,
            datamove: 2.0,
        });
        assert_eq!(
            table.layer_cost(&layer, Dtypes::default()).unwrap(),
            CostPair::new(1.0, 2.0)
        );
        let other = linear(999, 17, 768);
        assert_eq!(
            table.layer_cost(&other, Dtypes::default()).unwrap().compute,
            2.0 * 999.0 * 17.0
        );
    }

    #[test]
    fn unknown_kind_errors() {
        let mut layer = linear(10, 1, 8);
        layer.kind = "conv3d".into();
        let err = CostTable::default()
            .layer_cost(&layer, Dtypes::default())
            .unwrap_err();
        assert!(matches!(err, Error::UnknownLayerKind { .. }));
    }

    #[test]
    fn document_extends_defaults() {
        let doc = r#"
[rules]
conv3d = "dense"

[[measured]]
kind = "attention"
hidden_width = 4096
out_tokens = 1
params = 67108864
compute = 1.5e8
datamove = 1.4e8
"#;
        let table = CostTable::from_toml_str(doc).unwrap();
        assert_eq!(table.rules.get("conv3d"), Some(&CostRule::Dense));
        assert_eq!(table.rules.get("norm"), Some(&CostRule::Norm));
        assert_eq!(table.measured.len(), 1);

        let standalone =
            CostTable::from_toml_str("extends_default = false\n[rules]\nx = \"norm\"\n").unwrap();
        assert_eq!(standalone.rules.len(), 1);
        assert!(CostTable::from_toml_str("[rules]\nx = \"quadratic\"\n").is_err());
        assert!(CostTable::from_toml_str("bogus = 1\n").is_err());
    }
}
