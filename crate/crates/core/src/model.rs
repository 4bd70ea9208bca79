//! Structural model description: an ordered list of fine-grained layers,
//! grouped into encoder, backbone and decoder segments and into blocks.
//!
//! A cut `S` in `0..=n` places layers `[0, S)` on the edge device and
//! `[S, n)` on the cloud. Cut 0 ships the raw input, cut `n` ships only the
//! action vector back.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Decoder families that turn backbone features into actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DecoderKind {
    Detokenizer,
    Mlp,
    Lstm,
    Diffusion,
    Dit,
}

/// Which part of the model a layer belongs to.
///
/// Encoders carry an ordinal so that several vision towers can sit side by
/// side (`vit:0`, `vit:1`, ...).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SegmentKind {
    Encoder(u8),
    Backbone,
    Decoder(DecoderKind),
}

impl SegmentKind {
    pub fn is_encoder(self) -> bool {
        matches!(self, SegmentKind::Encoder(_))
    }
}

impl fmt::Display for SegmentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SegmentKind::Encoder(i) => write!(f, "vit:{i}"),
            SegmentKind::Backbone => f.write_str("llm"),
            SegmentKind::Decoder(d) => f.write_str(match d {
                DecoderKind::Detokenizer => "detokenizer",
                DecoderKind::Mlp => "mlp",
                DecoderKind::Lstm => "lstm",
                DecoderKind::Diffusion => "diffusion",
                DecoderKind::Dit => "dit",
            }),
        }
    }
}

impl FromStr for SegmentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        if let Some(rest) = s.strip_prefix("vit") {
            let ordinal = match rest.strip_prefix(':') {
                None if rest.is_empty() => 0,
                Some(n) => n.parse().map_err(|_| format!("bad encoder ordinal in `{s}`"))?,
                None => return Err(format!("unknown segment `{s}`")),
            };
            return Ok(SegmentKind::Encoder(ordinal));
        }
        Ok(match s.as_str() {
            "llm" => SegmentKind::Backbone,
            "detokenizer" => SegmentKind::Decoder(DecoderKind::Detokenizer),
            "mlp" => SegmentKind::Decoder(DecoderKind::Mlp),
            "lstm" => SegmentKind::Decoder(DecoderKind::Lstm),
            "diffusion" => SegmentKind::Decoder(DecoderKind::Diffusion),
            "dit" => SegmentKind::Decoder(DecoderKind::Dit),
            _ => return Err(format!("unknown segment `{s}`")),
        })
    }
}

impl TryFrom<String> for SegmentKind {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<SegmentKind> for String {
    fn from(k: SegmentKind) -> String {
        k.to_string()
    }
}

/// Per-layer cost of one iteration: FLOPs and bytes moved to/from memory.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostPair {
    pub compute: f64,
    pub datamove: f64,
}

impl CostPair {
    pub fn new(compute: f64, datamove: f64) -> Self {
        CostPair { compute, datamove }
    }
}

fn one() -> u32 {
    1
}

fn is_one(v: &u32) -> bool {
    *v == 1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub id: usize,
    pub segment: SegmentKind,
    pub block_index: usize,
    /// Layer-kind tag resolved through a [`CostTable`](crate::cost::CostTable).
    pub kind: String,
    /// Input hidden width in elements.
    pub hidden_width: u64,
    pub out_tokens: u64,
    pub out_width: u64,
    /// Parameter count.
    pub params: u64,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub repeat_count: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<CostPair>,
}

impl LayerSpec {
    pub fn is_iterative(&self) -> bool {
        self.repeat_count > 1
    }
}

/// Byte widths of activations and weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dtypes {
    pub activation: u64,
    pub weight: u64,
}

impl Default for Dtypes {
    fn default() -> Self {
        Dtypes {
            activation: 2,
            weight: 2,
        }
    }
}

fn two() -> u64 {
    2
}

/// One 224x224 RGB frame plus a 256-byte prompt.
pub const DEFAULT_INPUT_PAYLOAD: u64 = 224 * 224 * 3 + 256;
pub const DEFAULT_ACTION_PAYLOAD: u64 = 64;

fn default_input_payload() -> u64 {
    DEFAULT_INPUT_PAYLOAD
}

fn default_action_payload() -> u64 {
    DEFAULT_ACTION_PAYLOAD
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    #[serde(default = "two")]
    pub activation_dtype_bytes: u64,
    #[serde(default = "two")]
    pub weight_dtype_bytes: u64,
    /// Bytes shipped at cut 0 (raw observation and prompt).
    #[serde(default = "default_input_payload")]
    pub input_payload_bytes: u64,
    /// Bytes shipped back at cut n (the action vector).
    #[serde(default = "default_action_payload")]
    pub action_payload_bytes: u64,
    pub layers: Vec<LayerSpec>,
}

/// A maximal run of layers sharing one [`SegmentKind`].
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub kind: SegmentKind,
    pub range: Range<usize>,
}

/// A maximal run of layers sharing a segment and a block index.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub segment: usize,
    pub block_index: usize,
    pub range: Range<usize>,
}

impl ModelSpec {
    pub fn new(name: impl Into<String>, layers: Vec<LayerSpec>) -> Self {
        ModelSpec {
            name: name.into(),
            activation_dtype_bytes: 2,
            weight_dtype_bytes: 2,
            input_payload_bytes: DEFAULT_INPUT_PAYLOAD,
            action_payload_bytes: DEFAULT_ACTION_PAYLOAD,
            layers,
        }
    }

    /// Number of layers (`n`).
    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn dtypes(&self) -> Dtypes {
        Dtypes {
            activation: self.activation_dtype_bytes,
            weight: self.weight_dtype_bytes,
        }
    }

    /// Parses a TOML document and rejects specs that fail [`validate_model`].
    pub fn from_toml_str(src: &str) -> Result<Self> {
        let spec: ModelSpec = toml::from_str(src).map_err(|e| Error::parse("model spec", e))?;
        let report = validate_model(&spec);
        if !report.is_ok() {
            return Err(Error::InvalidModel {
                name: spec.name.clone(),
                violations: report.to_string(),
            });
        }
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("model spec serializes")
    }

    pub fn segments(&self) -> Vec<Segment> {
        let mut out: Vec<Segment> = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            match out.last_mut() {
                Some(seg) if seg.kind == layer.segment => seg.range.end = i + 1,
                _ => out.push(Segment {
                    kind: layer.segment,
                    range: i..i + 1,
                }),
            }
        }
        out
    }

    pub fn blocks(&self) -> Vec<Block> {
        let mut out: Vec<Block> = Vec::new();
        for (s, seg) in self.segments().iter().enumerate() {
            for i in seg.range.clone() {
                let bi = self.layers[i].block_index;
                match out.last_mut() {
                    Some(b) if b.segment == s && b.block_index == bi => b.range.end = i + 1,
                    _ => out.push(Block {
                        segment: s,
                        block_index: bi,
                        range: i..i + 1,
                    }),
                }
            }
        }
        out
    }

    /// True when `cut` separates two layers of the same iterative group, so
    /// the activation crosses the link once per iteration.
    pub fn cut_inside_iterative_group(&self, cut: usize) -> bool {
        if cut == 0 || cut >= self.len() {
            return false;
        }
        let (a, b) = (&self.layers[cut - 1], &self.layers[cut]);
        a.segment == b.segment && a.is_iterative() && b.is_iterative()
    }

    /// Bytes that cross the network when splitting at `cut`.
    pub fn cut_transfer_bytes(&self, cut: usize) -> Result<u64> {
        let n = self.len();
        if cut > n {
            return Err(Error::CutOutOfRange { cut, n });
        }
        if cut == 0 {
            return Ok(self.input_payload_bytes);
        }
        if cut == n {
            return Ok(self.action_payload_bytes);
        }
        let prev = &self.layers[cut - 1];
        let per_iteration = prev.out_tokens * prev.out_width * self.activation_dtype_bytes;
        let iterations = if self.cut_inside_iterative_group(cut) {
            u64::from(prev.repeat_count)
        } else {
            1
        };
        Ok(per_iteration * iterations)
    }

    /// Parameter bytes of layers `[lo, hi)`.
    pub fn segment_load(&self, range: Range<usize>) -> Result<u64> {
        let n = self.len();
        if range.start > range.end || range.end > n {
            return Err(Error::RangeOutOfBounds {
                lo: range.start,
                hi: range.end,
                n,
            });
        }
        Ok(self.layers[range]
            .iter()
            .map(|l| l.params * self.weight_dtype_bytes)
            .sum())
    }

    pub fn total_load(&self) -> u64 {
        self.segment_load(0..self.len()).expect("full range is valid")
    }

    pub fn total_params(&self) -> u64 {
        self.layers.iter().map(|l| l.params).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub layer: Option<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.layer {
            Some(id) => write!(f, "layer {id}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn mentions(&self, needle: &str) -> bool {
        self.violations.iter().any(|v| v.message.contains(needle))
    }

    fn push(&mut self, layer: Option<usize>, message: impl Into<String>) {
        self.violations.push(Violation {
            layer,
            message: message.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return f.write_str("ok");
        }
        let parts: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        f.write_str(&parts.join("; "))
    }
}

/// Checks layer invariants and the `[encoder x1..4, backbone, decoder]`
/// segment grammar. Violations are returned as data.
pub fn validate_model(spec: &ModelSpec) -> ValidationReport {
    let mut report = ValidationReport::default();
    if spec.layers.is_empty() {
        report.push(None, "model has no layers");
        return report;
    }
    if spec.activation_dtype_bytes == 0 || spec.weight_dtype_bytes == 0 {
        report.push(None, "dtype widths must be at least one byte");
    }

    for (i, layer) in spec.layers.iter().enumerate() {
        if layer.id != i {
            report.push(
                Some(layer.id),
                format!("non-consecutive ids: expected {i}, found {}", layer.id),
            );
        }
        let id = Some(layer.id);
        if layer.kind.trim().is_empty() {
            report.push(id, "empty layer kind");
        }
        if layer.hidden_width == 0 {
            report.push(id, "hidden_width must be positive");
        }
        if layer.out_width == 0 {
            report.push(id, "out_width must be positive");
        }
        if layer.out_tokens == 0 {
            report.push(id, "out_tokens must be at least 1");
        }
        if layer.repeat_count == 0 {
            report.push(id, "repeat_count must be at least 1");
        }
        if let Some(c) = layer.cost {
            if !(c.compute >= 0.0 && c.datamove >= 0.0) || !c.compute.is_finite() || !c.datamove.is_finite() {
                report.push(id, "cost override must be finite and non-negative");
            }
        }
    }

    let segments = spec.segments();
    let encoders: Vec<&Segment> = segments.iter().filter(|s| s.kind.is_encoder()).collect();
    let backbones = segments
        .iter()
        .filter(|s| s.kind == SegmentKind::Backbone)
        .count();
    let decoders = segments
        .iter()
        .filter(|s| matches!(s.kind, SegmentKind::Decoder(_)))
        .count();
    let first_layer = |s: &Segment| Some(spec.layers[s.range.start].id);

    if encoders.is_empty() {
        report.push(None, "missing encoder segment");
    } else if encoders.len() > 4 {
        report.push(first_layer(encoders[4]), "more than 4 encoder segments");
    }
    for (expected, seg) in encoders.iter().enumerate() {
        if seg.kind != SegmentKind::Encoder(expected as u8) {
            report.push(
                first_layer(seg),
                format!("encoder ordinals must run 0,1,..; found {}", seg.kind),
            );
            break;
        }
    }
    match backbones {
        0 => report.push(None, "missing backbone segment"),
        1 => {}
        _ => report.push(None, "multiple backbones"),
    }
    match decoders {
        0 => report.push(None, "missing decoder segment"),
        1 => {}
        _ => report.push(None, "multiple decoders"),
    }
    // Rank must be non-decreasing: encoders, then backbone, then decoder.
    let rank = |k: SegmentKind| match k {
        SegmentKind::Encoder(_) => 0,
        SegmentKind::Backbone => 1,
        SegmentKind::Decoder(_) => 2,
    };
    for pair in segments.windows(2) {
        if rank(pair[1].kind) < rank(pair[0].kind) {
            report.push(
                first_layer(&pair[1]),
                format!("segment order: {} follows {}", pair[1].kind, pair[0].kind),
            );
        }
    }

    for seg in &segments {
        let layers = &spec.layers[seg.range.clone()];
        for pair in layers.windows(2) {
            if pair[1].block_index < pair[0].block_index {
                report.push(Some(pair[1].id), "block_index decreases within a segment");
            }
            if pair[0].is_iterative()
                && pair[1].is_iterative()
                && pair[0].repeat_count != pair[1].repeat_count
            {
                report.push(Some(pair[1].id), "mixed repeat_count inside one iterative group");
            }
        }
    }
    report
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn layer(id: usize, segment: SegmentKind, block: usize, width: u64) -> LayerSpec {
        LayerSpec {
            id,
            segment,
            block_index: block,
            kind: "linear".into(),
            hidden_width: width,
            out_tokens: 17,
            out_width: width,
            params: width * width,
            repeat_count: 1,
            cost: None,
        }
    }

    fn minimal() -> ModelSpec {
        ModelSpec::new(
            "minimal",
            vec![
                layer(0, SegmentKind::Encoder(0), 0, 768),
                layer(1, SegmentKind::Backbone, 0, 4096),
                layer(2, SegmentKind::Decoder(DecoderKind::Detokenizer), 0, 7),
            ],
        )
    }

    #[test]
    fn minimal_grammar_is_ok() {
        let report = validate_model(&minimal());
        assert!(report.is_ok(), "{report}");
    }

    #[test]
    fn two_backbones_rejected() {
        let mut spec = minimal();
        spec.layers
            .insert(2, layer(2, SegmentKind::Decoder(DecoderKind::Mlp), 0, 7));
        spec.layers.insert(3, layer(3, SegmentKind::Backbone, 0, 4096));
        for (i, l) in spec.layers.iter_mut().enumerate() {
            l.id = i;
        }
        let report = validate_model(&spec);
        assert!(report.mentions("multiple backbones"), "{report}");
    }

    #[test]
    fn id_gap_rejected() {
        let mut spec = minimal();
        spec.layers[1].id = 2;
        spec.layers[2].id = 3;
        let report = validate_model(&spec);
        assert!(report.mentions("non-consecutive ids"), "{report}");
        assert_eq!(report.violations[0].layer, Some(2));
    }

    #[test]
    fn encoder_limits() {
        let mut layers: Vec<LayerSpec> = (0..5)
            .map(|i| layer(i, SegmentKind::Encoder(i as u8), 0, 64))
            .collect();
        layers.push(layer(5, SegmentKind::Backbone, 0, 64));
        layers.push(layer(6, SegmentKind::Decoder(DecoderKind::Dit), 0, 64));
        let report = validate_model(&ModelSpec::new("wide", layers));
        assert!(report.mentions("more than 4 encoder"), "{report}");
    }

    #[test]
    fn decoder_before_backbone_rejected() {
        let spec = ModelSpec::new(
            "swapped",
            vec![
                layer(0, SegmentKind::Encoder(0), 0, 64),
                layer(1, SegmentKind::Decoder(DecoderKind::Mlp), 0, 64),
                layer(2, SegmentKind::Backbone, 0, 64),
            ],
        );
        assert!(validate_model(&spec).mentions("segment order"));
    }

    #[test]
    fn mixed_repeat_rejected() {
        let mut spec = minimal();
        let mut a = layer(3, SegmentKind::Decoder(DecoderKind::Detokenizer), 1, 7);
        a.repeat_count = 4;
        spec.layers[2].repeat_count = 10;
        spec.layers.push(a);
        assert!(validate_model(&spec).mentions("mixed repeat_count"));
    }

    #[test]
    fn segment_kind_strings() {
        for s in [
            "vit:0",
            "vit:3",
            "llm",
            "detokenizer",
            "mlp",
            "lstm",
            "diffusion",
            "dit",
        ] {
            let k: SegmentKind = s.parse().unwrap();
            assert_eq!(k.to_string(), s);
        }
        assert_eq!("vit".parse::<SegmentKind>().unwrap(), SegmentKind::Encoder(0));
        assert!("transformer".parse::<SegmentKind>().is_err());
    }

    #[test]
    fn fig3_transfer_sizes() {
        let mut spec = minimal();
        spec.layers[0].out_tokens = 17;
        spec.layers[0].out_width = 3072;
        assert_eq!(spec.cut_transfer_bytes(1).unwrap(), 104_448);
        assert_eq!(spec.cut_transfer_bytes(1).unwrap() as f64 / 1024.0, 102.0);
        spec.layers[1].out_width = 768;
        assert_eq!(spec.cut_transfer_bytes(2).unwrap(), 26_112);
        assert_eq!(26_112.0 / 1024.0, 25.5);
    }

    #[test]
    fn degenerate_cuts_use_payloads() {
        let spec = minimal();
        assert_eq!(spec.cut_transfer_bytes(0).unwrap(), DEFAULT_INPUT_PAYLOAD);
        assert_eq!(spec.cut_transfer_bytes(3).unwrap(), 64);
        assert!(matches!(
            spec.cut_transfer_bytes(4),
            Err(Error::CutOutOfRange { cut: 4, n: 3 })
        ));
    }

    #[test]
    fn iterative_cut_multiplies_transfer() {
        let mut layers = vec![
            layer(0, SegmentKind::Encoder(0), 0, 768),
            layer(1, SegmentKind::Backbone, 0, 768),
        ];
        for i in 2..5 {
            let mut l = layer(i, SegmentKind::Decoder(DecoderKind::Diffusion), i - 2, 768);
            l.repeat_count = 10;
            layers.push(l);
        }
        let spec = ModelSpec::new("diff", layers);
        assert!(validate_model(&spec).is_ok());
        // oracle: ten separate per-step transfers of [1, 17, 768] at 2 B
        let per_step: u64 = 17 * 768 * 2;
        let summed: u64 = (0..10).map(|_| per_step).sum();
        assert_eq!(spec.cut_transfer_bytes(3).unwrap(), summed);
        assert_eq!(summed, 261_120);
        // group boundary: entering the loop ships the conditioning once
        assert_eq!(spec.cut_transfer_bytes(2).unwrap(), per_step);
    }

    #[test]
    fn loads_and_ranges() {
        let spec = minimal();
        assert_eq!(spec.segment_load(1..1).unwrap(), 0);
        assert_eq!(
            spec.segment_load(0..3).unwrap(),
            (768 * 768 + 4096 * 4096 + 49) * 2
        );
        assert!(matches!(
            spec.segment_load(2..5),
            Err(Error::RangeOutOfBounds { .. })
        ));
    }

    #[test]
    fn toml_rejects_unknown_fields() {
        let mut text = minimal().to_toml_string();
        text = text.replacen("name = ", "colour = \"red\"\nname = ", 1);
        let err = ModelSpec::from_toml_str(&text).unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");
    }

    #[test]
    fn toml_round_trip_with_override() {
        let mut spec = minimal();
        spec.layers[1].cost = Some(CostPair::new(5e9, 1048576.0));
        spec.layers[2].repeat_count = 3;
        let back = ModelSpec::from_toml_str(&spec.to_toml_string()).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn blocks_follow_segments() {
        let spec = minimal();
        let blocks = spec.blocks();
        assert_eq!(blocks.len(), 3);
        assert_eq!(blocks[1].range, 1..2);
    }
}
