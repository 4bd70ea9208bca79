#![allow(dead_code)]

use edgecut::{hardware::TFLOPS, CostPair, DecoderKind, HardwareProfile, LayerSpec, ModelSpec, SegmentKind};
use rand::Rng;

pub fn layer(id: usize, segment: SegmentKind, block: usize, out_tokens: u64, out_width: u64) -> LayerSpec {
    LayerSpec {
        id,
        segment,
        block_index: block,
        kind: "linear".into(),
        hidden_width: 768,
        out_tokens,
        out_width,
        params: 1_000_000,
        repeat_count: 1,
        cost: None,
    }
}

/// Random valid spec with explicit per-layer costs. The decoder is sometimes
/// an iterative group, so in-group cuts are exercised.
pub fn random_spec(rng: &mut impl Rng, max_layers: usize) -> ModelSpec {
    let n = rng.gen_range(3..=max_layers);
    let decoder_len = rng.gen_range(1..=(n - 2).min(6));
    let repeat = if rng.gen_bool(0.4) {
        rng.gen_range(2..=10)
    } else {
        1
    };
    let widths = [7u64, 64, 256, 768, 1024, 3072, 4096];
    let mut layers = Vec::with_capacity(n);
    for id in 0..n {
        let (segment, block, repeat_count) = if id == 0 {
            (SegmentKind::Encoder(0), 0, 1)
        } else if id < n - decoder_len {
            (SegmentKind::Backbone, id / 3, 1)
        } else {
            (SegmentKind::Decoder(DecoderKind::Diffusion), 0, repeat)
        };
        let out_width = widths[rng.gen_range(0..widths.len())];
        let mut l = layer(id, segment, block, rng.gen_range(1..=300), out_width);
        l.params = rng.gen_range(0..200_000_000);
        l.repeat_count = repeat_count;
        // coarse steps make exact ties between cuts reasonably common
        let compute = if rng.gen_bool(0.2) {
            0.0
        } else {
            1e9 * rng.gen_range(1..=4000) as f64
        };
        let datamove = 1e6 * rng.gen_range(0..=400) as f64;
        l.cost = Some(CostPair::new(compute, datamove));
        layers.push(l);
    }
    let mut spec = ModelSpec::new("random", layers);
    spec.input_payload_bytes = rng.gen_range(1..=1_000_000);
    spec.action_payload_bytes = rng.gen_range(1..=1024);
    spec
}

pub fn random_profile(rng: &mut impl Rng) -> HardwareProfile {
    let peak = rng.gen_range(1.0..3000.0) * TFLOPS;
    let units = rng.gen_range(1..=512);
    let bw = rng.gen_range(10.0..3000.0) * 1e9;
    HardwareProfile::from_peak("random", peak, units, bw).with_utilization(rng.gen_range(0.05..=1.0))
}

/// Roofline latency of one layer straight from the formula.
pub fn oracle_layer_latency(cost: CostPair, hw: &HardwareProfile, repeat: u32) -> f64 {
    let r = f64::from(repeat);
    let compute = r * cost.compute / (hw.per_unit_power * f64::from(hw.parallel_units) * hw.utilization);
    let memory = r * cost.datamove / hw.mem_bandwidth;
    if compute > memory {
        compute
    } else {
        memory
    }
}

/// Transfer bytes at `cut`, recomputed from layer fields.
pub fn oracle_transfer(spec: &ModelSpec, cut: usize) -> u64 {
    let n = spec.layers.len();
    if cut == 0 {
        return spec.input_payload_bytes;
    }
    if cut == n {
        return spec.action_payload_bytes;
    }
    let a = &spec.layers[cut - 1];
    let b = &spec.layers[cut];
    let bytes = a.out_tokens * a.out_width * spec.activation_dtype_bytes;
    if a.segment == b.segment && a.repeat_count > 1 && b.repeat_count > 1 {
        bytes * u64::from(a.repeat_count)
    } else {
        bytes
    }
}

/// Exhaustive budgeted search: lowest total, ties to the larger cut.
pub fn oracle_best_cut(
    spec: &ModelSpec,
    edge: &HardwareProfile,
    cloud: &HardwareProfile,
    bandwidth: f64,
    budget: u64,
) -> usize {
    let n = spec.layers.len();
    let cost = |i: usize| spec.layers[i].cost.unwrap();
    let mut totals = Vec::new();
    for cut in 0..=n {
        let cloud_load: u64 = spec.layers[cut..]
            .iter()
            .map(|l| l.params * spec.weight_dtype_bytes)
            .sum();
        if cloud_load > budget {
            continue;
        }
        let mut t_edge = 0.0;
        for i in 0..cut {
            t_edge += oracle_layer_latency(cost(i), edge, spec.layers[i].repeat_count);
        }
        let mut t_cloud = 0.0;
        for i in cut..n {
            t_cloud += oracle_layer_latency(cost(i), cloud, spec.layers[i].repeat_count);
        }
        let t_net = oracle_transfer(spec, cut) as f64 / bandwidth;
        totals.push((cut, t_edge + t_net + t_cloud));
    }
    let best = totals.iter().map(|&(_, t)| t).fold(f64::INFINITY, f64::min);
    totals
        .iter()
        .filter(|&&(_, t)| t == best)
        .map(|&(c, _)| c)
        .max()
        .unwrap()
}

/// Eleven layers of 13.75 TFLOP each (50 ms on Orin), widths chosen so that
/// the block around cut 6 offers a 102 KB and a 25.5 KB boundary:
///
/// | cut      | 4     | 5    | 6     | 7     |
/// |----------|-------|------|-------|-------|
/// | transfer | 3072w | 768w | 3072w | 3072w |
///
/// Every layer holds 2 MB of parameters (in decimal bytes), so a 10 MB
/// budget forces the cut to 6 or later.
pub fn square_wave_fixture() -> ModelSpec {
    let widths = [768u64, 768, 3072, 3072, 768, 3072, 3072, 768, 3072, 3072];
    let mut layers = Vec::new();
    for (id, &w) in widths.iter().enumerate() {
        let (segment, block) = if id == 0 {
            (SegmentKind::Encoder(0), 0)
        } else {
            (SegmentKind::Backbone, (id - 1) / 3)
        };
        layers.push(layer(id, segment, block, 17, w));
    }
    layers.push(layer(10, SegmentKind::Decoder(DecoderKind::Mlp), 0, 1, 7));
    for l in &mut layers {
        l.cost = Some(CostPair::new(FIXTURE_FLOPS, 0.0));
    }
    ModelSpec::new("square-wave-fixture", layers)
}

pub const FIXTURE_FLOPS: f64 = 13.75e12;
pub const FIXTURE_BUDGET: u64 = 10_000_000;

/// `h` high samples then `h` low samples, repeated; `lead` extra samples of
/// the low level precede the first period and one high sample follows the last.
pub fn square_wave(high: f64, low: f64, h: usize, periods: usize, lead: usize) -> Vec<f64> {
    let mut s = vec![low; lead];
    for _ in 0..periods {
        s.extend(std::iter::repeat_n(high, h));
        s.extend(std::iter::repeat_n(low, h));
    }
    s.push(high);
    s
}
