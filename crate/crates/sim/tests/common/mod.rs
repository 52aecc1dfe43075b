//! Test-side oracles. None of these call into the engines they check,
//! except to read queue contents.
#![allow(dead_code)]

use aeqsim::random::{random_model, RandomConfig};
use aeqsim_core::{AeqBank, AeqStore, KernelSize, NetworkSpec, Width};
use rand::Rng;

/// Same-padded correlation with a wide accumulator: `out(r,c) = sum K[dr+1][dc+1] * x(r+dr, c+dc)`.
pub fn dense_conv(spikes: &[bool], h: usize, w: usize, kernel: &[i16], size: KernelSize) -> Vec<i64> {
    let mut out = vec![0i64; h * w];
    let half = (size.side() / 2) as isize;
    for r in 0..h as isize {
        for c in 0..w as isize {
            let mut acc = 0i64;
            for dr in -half..=half {
                for dc in -half..=half {
                    let (rr, cc) = (r + dr, c + dc);
                    if rr >= 0 && cc >= 0 && rr < h as isize && cc < w as isize && spikes[(rr as usize) * w + cc as usize] {
                        acc += kernel[((dr + half) as usize) * size.side() + (dc + half) as usize] as i64;
                    }
                }
            }
            out[(r as usize) * w + c as usize] = acc;
        }
    }
    out
}

/// Interlace coordinates to row/col, written out independently of the core.
pub fn global_of(i: u16, j: u16, s: u8) -> (usize, usize) {
    (3 * i as usize + (s % 3) as usize, 3 * j as usize + (s / 3) as usize)
}

/// Cells an event at `(r, c)` updates.
pub fn footprint(r: usize, c: usize, h: usize, w: usize, size: KernelSize) -> Vec<(usize, usize)> {
    let half = (size.side() / 2) as isize;
    let mut v = Vec::new();
    for dr in -half..=half {
        for dc in -half..=half {
            let (rr, cc) = (r as isize + dr, c as isize + dc);
            if rr >= 0 && cc >= 0 && rr < h as isize && cc < w as isize {
                v.push((rr as usize, cc as usize));
            }
        }
    }
    v
}

/// Expected counters of one activation, recounted from the queue contents.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct Recount {
    pub valid: u64,
    pub wasted: u64,
    pub stalls: u64,
    pub wind_up: u64,
}

impl Recount {
    pub fn cycles(&self) -> u64 {
        self.valid + self.wasted + self.stalls + self.wind_up
    }

    pub fn add(&mut self, o: &Recount) {
        self.valid += o.valid;
        self.wasted += o.wasted;
        self.stalls += o.stalls;
        self.wind_up += o.wind_up;
    }
}

/// Walks the column-ordered read sequence. A stall occurs exactly when a
/// valid event directly follows another valid event and their footprints
/// overlap; anything two or more reads apart is forwarded.
pub fn recount_bank(bank: &AeqBank, h: usize, w: usize, size: KernelSize) -> Recount {
    let mut rc = Recount::default();
    let mut prev: Option<Vec<(usize, usize)>> = None;
    let mut reads = 0u64;
    for s in 0..9u8 {
        for e in bank.column(s) {
            reads += 1;
            if !e.valid {
                rc.wasted += 1;
                prev = None;
                continue;
            }
            rc.valid += 1;
            let (r, c) = global_of(e.i, e.j, s);
            let fp = footprint(r, c, h, w, size);
            if let Some(p) = &prev {
                if p.iter().any(|x| fp.contains(x)) {
                    rc.stalls += 1;
                }
            }
            prev = Some(fp);
        }
    }
    if reads > 0 {
        rc.wind_up = 4;
    }
    rc
}

/// Per output channel, the layer's conv counters from its input store.
pub fn recount_layer(input: &AeqStore, size: KernelSize) -> Recount {
    let d = input.dims();
    let mut rc = Recount::default();
    for c in 0..input.channels() {
        for t in 0..input.timesteps() {
            rc.add(&recount_bank(input.bank(c, t), d.height, d.width, size));
        }
    }
    rc
}

/// Random topology no larger than `30x30-8C3-8C3-P3-4C3-F10`.
pub fn random_shape(rng: &mut impl Rng) -> String {
    let h = rng.gen_range(1..=30);
    let w = rng.gen_range(1..=30);
    let mut s = if rng.gen_bool(0.2) { format!("{h}x{w}x2") } else { format!("{h}x{w}") };
    let n = rng.gen_range(1..=3);
    let pool_at = if rng.gen_bool(0.6) { Some(rng.gen_range(0..n)) } else { None };
    for l in 0..n {
        let ch = if l == n - 1 { rng.gen_range(1..=4) } else { rng.gen_range(1..=8) };
        let k = if rng.gen_bool(0.15) { 1 } else { 3 };
        s.push_str(&format!("-{ch}C{k}"));
        if pool_at == Some(l) {
            s.push_str("-P3");
        }
    }
    s.push_str(&format!("-F{}", rng.gen_range(2..=10)));
    s
}

/// Random weight regime: sometimes quiet, sometimes saturating.
pub fn random_config(rng: &mut impl Rng) -> RandomConfig {
    let width = if rng.gen_bool(0.5) { Width::W8 } else { Width::W16 };
    let scale: i16 = match (width, rng.gen_range(0..4)) {
        (_, 0) => 4,
        (_, 1) => 16,
        (Width::W8, _) => 48,
        (Width::W16, 2) => 300,
        (Width::W16, _) => 4000,
    };
    RandomConfig {
        width,
        timesteps: rng.gen_range(1..=5),
        max_pixel: 255,
        weights: -scale..=scale + scale / 2,
        bias: -(scale / 8)..=scale / 8,
        threshold: 0..=scale.saturating_mul(3),
        classifier_weights: -(scale / 4).max(1)..=(scale / 4).max(1),
    }
}

pub fn random_net(rng: &mut impl Rng) -> (String, NetworkSpec) {
    let shape = random_shape(rng);
    let cfg = random_config(rng);
    let net = random_model(rng.gen(), &shape, &cfg).expect("generated shape parses");
    (shape, net)
}
