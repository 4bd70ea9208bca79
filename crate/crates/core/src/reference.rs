//! Bundled reference models built from public architecture dimensions.
//!
//! Both share a DINOv2-L and a SigLIP-so400m vision tower, a three-layer
//! projector and a LLaMA-2-7B backbone. They differ in the action decoder.

use crate::error::{Error, Result};
use crate::model::{DecoderKind, LayerSpec, ModelSpec, SegmentKind};

pub const BUILTIN_MODELS: [&str; 2] = ["openvla-7b-like", "cogact-like"];

/// Action tokens decoded per control step by the autoregressive backbone.
pub const ACTION_TOKENS: u32 = 7;
/// Denoising iterations of the diffusion decoder.
pub const DIFFUSION_STEPS: u32 = 10;

const PATCH: u64 = 14 * 14 * 3;
const LLM_WIDTH: u64 = 4096;
const LLM_MLP: u64 = 11008;
const LLM_BLOCKS: usize = 32;
const VOCAB: u64 = 32000;

struct Builder {
    segment: SegmentKind,
    block: usize,
    tokens: u64,
    repeat: u32,
    layers: Vec<LayerSpec>,
}

impl Builder {
    fn new() -> Self {
        Builder {
            segment: SegmentKind::Encoder(0),
            block: 0,
            tokens: 1,
            repeat: 1,
            layers: Vec::new(),
        }
    }

    fn segment(&mut self, kind: SegmentKind, tokens: u64, repeat: u32) -> &mut Self {
        self.segment = kind;
        self.block = 0;
        self.tokens = tokens;
        self.repeat = repeat;
        self
    }

    fn next_block(&mut self) -> &mut Self {
        if self.layers.last().is_some_and(|l| l.segment == self.segment) {
            self.block += 1;
        }
        self
    }

    fn push(&mut self, kind: &str, hidden: u64, out: u64, params: u64) -> &mut Self {
        self.layers.push(LayerSpec {
            id: self.layers.len(),
            segment: self.segment,
            block_index: self.block,
            kind: kind.into(),
            hidden_width: hidden,
            out_tokens: self.tokens,
            out_width: out,
            params,
            repeat_count: self.repeat,
            cost: None,
        });
        self
    }

    fn dense(&mut self, kind: &str, hidden: u64, out: u64) -> &mut Self {
        self.push(kind, hidden, out, hidden * out + out)
    }

    fn norm(&mut self, width: u64) -> &mut Self {
        self.push("norm", width, width, 2 * width)
    }

    /// Pre-norm transformer block with biased projections.
    fn vit_block(&mut self, width: u64, mlp: u64) -> &mut Self {
        self.norm(width)
            .push("attention", width, width, 4 * width * width + 4 * width)
            .norm(width)
            .dense("mlp-up", width, mlp)
            .dense("mlp-down", mlp, width)
    }

    fn vit(&mut self, ordinal: u8, width: u64, mlp: u64, depth: usize, tokens: u64) -> &mut Self {
        self.segment(SegmentKind::Encoder(ordinal), tokens, 1);
        let pos = tokens * width;
        self.push("patch-embed", PATCH, width, PATCH * width + width + pos);
        for _ in 0..depth {
            self.next_block().vit_block(width, mlp);
        }
        self.next_block().norm(width)
    }

    fn towers(&mut self) -> &mut Self {
        self.vit(0, 1024, 4096, 24, 257)
            .vit(1, 1152, 4304, 27, 256)
            .next_block()
            .dense("linear", 1024 + 1152, 4 * (1024 + 1152))
            .dense("linear", 4 * (1024 + 1152), LLM_WIDTH)
            .dense("linear", LLM_WIDTH, LLM_WIDTH)
    }

    /// RMSNorm and bias-free projections, gated MLP.
    fn llama(&mut self, tokens: u64, repeat: u32) -> &mut Self {
        self.segment(SegmentKind::Backbone, tokens, repeat);
        self.push("embed", LLM_WIDTH, LLM_WIDTH, VOCAB * LLM_WIDTH);
        for _ in 0..LLM_BLOCKS {
            self.next_block()
                .push("norm", LLM_WIDTH, LLM_WIDTH, LLM_WIDTH)
                .push("attention", LLM_WIDTH, LLM_WIDTH, 4 * LLM_WIDTH * LLM_WIDTH)
                .push("norm", LLM_WIDTH, LLM_WIDTH, LLM_WIDTH)
                .push("mlp-up", LLM_WIDTH, LLM_MLP, 2 * LLM_WIDTH * LLM_MLP)
                .push("mlp-down", LLM_MLP, LLM_WIDTH, LLM_MLP * LLM_WIDTH);
        }
        self.next_block()
    }

    fn build(&mut self, name: &str) -> ModelSpec {
        ModelSpec::new(name, std::mem::take(&mut self.layers))
    }
}

/// Autoregressive VLA: vision towers, LLaMA-2-7B decoding seven action
/// tokens per step, and a detokenizer.
///
/// The backbone repeats once per action token on a single-token
/// activation, so cuts inside it ship `7 x 8 KiB` per step.
pub fn openvla_7b_like() -> ModelSpec {
    let mut b = Builder::new();
    b.towers().llama(1, ACTION_TOKENS);
    b.push("norm", LLM_WIDTH, LLM_WIDTH, LLM_WIDTH)
        .push("lm-head", LLM_WIDTH, VOCAB, VOCAB * LLM_WIDTH);
    b.segment(SegmentKind::Decoder(DecoderKind::Detokenizer), 1, 1)
        .push("detok", 7, 7, 0);
    b.build("openvla-7b-like")
}

/// Diffusion-policy VLA: vision towers, a single-pass LLaMA-2-7B producing
/// one cognition token, and a DiT-B action head run for ten denoising steps.
pub fn cogact_like() -> ModelSpec {
    const DIT: u64 = 768;
    const HORIZON: u64 = 16;
    let mut b = Builder::new();
    b.towers().llama(273, 1);
    b.tokens = 1;
    b.push("norm", LLM_WIDTH, LLM_WIDTH, LLM_WIDTH);
    b.segment(SegmentKind::Decoder(DecoderKind::Dit), 1, 1)
        .dense("linear", LLM_WIDTH, DIT);
    b.tokens = HORIZON + 1;
    b.repeat = DIFFUSION_STEPS;
    for _ in 0..12 {
        b.next_block()
            .dense("dit-block-sublayer", DIT, 6 * DIT)
            .vit_block(DIT, 4 * DIT);
    }
    b.next_block().tokens = HORIZON;
    b.norm(DIT)
        .dense("linear", DIT, 7)
        .push("diffusion-step", 7, 7, 0);
    b.build("cogact-like")
}

pub fn builtin_model(name: &str) -> Result<ModelSpec> {
    match name.to_ascii_lowercase().as_str() {
        "openvla-7b-like" => Ok(openvla_7b_like()),
        "cogact-like" => Ok(cogact_like()),
        _ => Err(Error::config(format!(
            "unknown builtin model `{name}` (known: {})",
            BUILTIN_MODELS.join(", ")
        ))),
    }
}
