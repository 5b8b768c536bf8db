//! Standard normal quantile (Wichura's AS 241, PPND16), accurate to about 1e-16.
#![allow(clippy::excessive_precision)]

const A: [f64; 8] = [
    3.387_132_872_796_366_608,
    1.331_416_678_917_843_774_5e2,
    1.971_590_950_306_551_442_7e3,
    1.373_169_376_550_946_112_5e4,
    4.592_195_393_154_987_145_7e4,
    6.726_577_092_700_870_085_3e4,
    3.343_057_558_358_812_810_5e4,
    2.509_080_928_730_122_672_7e3,
];
const B: [f64; 8] = [
    1.0,
    4.231_333_070_160_091_125_2e1,
    6.871_870_074_920_579_083e2,
    5.394_196_021_424_751_107_7e3,
    2.121_379_430_158_659_586_7e4,
    3.930_789_580_009_271_061e4,
    2.872_908_573_572_194_267_4e4,
    5.226_495_278_852_854_561e3,
];
const C: [f64; 8] = [
    1.423_437_110_749_683_577_34,
    4.630_337_846_156_545_295_9,
    5.769_497_221_460_691_405_5,
    3.647_848_324_763_204_605_04,
    1.270_458_252_452_368_382_58,
    2.417_807_251_774_506_117_7e-1,
    2.272_384_498_926_918_458_33e-2,
    7.745_450_142_783_414_076_4e-4,
];
const D: [f64; 8] = [
    1.0,
    2.053_191_626_637_758_821_87,
    1.676_384_830_183_803_849_4,
    6.897_673_349_851_000_045_5e-1,
    1.481_039_764_274_800_745_9e-1,
    1.519_866_656_361_645_719_66e-2,
    5.475_938_084_995_344_946e-4,
    1.050_750_071_644_416_843_24e-9,
];
const E: [f64; 8] = [
    6.657_904_643_501_103_777_2,
    5.463_784_911_164_114_369_9,
    1.784_826_539_917_291_335_8,
    2.965_605_718_285_048_912_3e-1,
    2.653_218_952_657_612_309_3e-2,
    1.242_660_947_388_078_438_6e-3,
    2.711_555_568_743_487_578_15e-5,
    2.010_334_399_292_288_132_65e-7,
];
const F: [f64; 8] = [
    1.0,
    5.998_322_065_558_879_376_9e-1,
    1.369_298_809_227_358_053_1e-1,
    1.487_536_129_085_061_485_25e-2,
    7.868_691_311_456_132_591e-4,
    1.846_318_317_510_054_681_8e-5,
    1.421_511_758_316_445_888_7e-7,
    2.044_263_103_389_939_785_64e-15,
];

// `mul_add` is correctly rounded on every platform, so results do not depend on
// whether the hardware has FMA.
#[inline(always)]
fn poly(c: &[f64; 8], r: f64) -> f64 {
    let mut acc = c[7];
    for &k in c[..7].iter().rev() {
        acc = acc.mul_add(r, k);
    }
    acc
}

const MANTISSA_SCALE: f64 = 1.0 / (1u64 << 52) as f64;
const TWO_POW_52: f64 = (1u64 << 52) as f64;

const fn is_tail(m: u64) -> bool {
    let q = (m as f64 + 0.5) * MANTISSA_SCALE - 0.5;
    q > 0.425 || q < -0.425
}

/// First `m` in `[lo, hi)` where `is_tail(m) != tail_below`, for a predicate that flips once.
const fn flip_point(mut lo: u64, mut hi: u64, tail_below: bool) -> u64 {
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if is_tail(mid) == tail_below {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    lo
}

/// `bits >> 12` below this lands in the lower tail branch.
const LOWER_TAIL_END: u64 = flip_point(0, 1 << 51, true);
/// `bits >> 12` at or above this lands in the upper tail branch.
const UPPER_TAIL_START: u64 = flip_point(1 << 51, 1 << 52, false);

#[inline(always)]
fn in_tail(bits: u64) -> bool {
    let m = bits >> 12;
    !(LOWER_TAIL_END..UPPER_TAIL_START).contains(&m)
}

/// `Phi^{-1}(p)` for `p` in `(0, 1)`; returns `-inf` / `+inf` at the endpoints.
#[inline]
pub fn inverse_cdf(p: f64) -> f64 {
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    tail(p)
}

/// The `|p - 0.5| > 0.425` branch.
#[inline]
fn tail(p: f64) -> f64 {
    let q = p - 0.5;
    let t = p.min(1.0 - p);
    if t <= 0.0 {
        return if q < 0.0 { f64::NEG_INFINITY } else { f64::INFINITY };
    }
    let l = if t >= f64::MIN_POSITIVE { ln(t) } else { t.ln() };
    tail_value((-l).sqrt()).copysign(q)
}

const LN2_HI: f64 = 6.931_471_803_691_238_164_90e-1;
const LN2_LO: f64 = 1.908_214_929_270_587_700_02e-10;
const LG: [f64; 7] = [
    6.666_666_666_666_735_130e-1,
    3.999_999_999_940_941_908e-1,
    2.857_142_874_366_239_149e-1,
    2.222_219_843_214_978_396e-1,
    1.818_357_216_161_805_012e-1,
    1.531_383_769_920_937_332e-1,
    1.479_819_860_511_658_591e-1,
];

/// Natural logarithm of a positive normal `x`, within 1 ulp. The fdlibm
/// reduction and polynomial without the special-case branches, so batches
/// vectorize; plain arithmetic, so the bits do not depend on the platform libm.
#[inline(always)]
fn ln(x: f64) -> f64 {
    let bits = x.to_bits();
    // move the mantissa into [sqrt(2)/2, sqrt(2))
    let hx = (bits >> 32) as u32 + (0x3ff0_0000 - 0x3fe6_a09e);
    let k = (hx >> 20) as i32 - 0x3ff;
    let hx = (hx & 0x000f_ffff) + 0x3fe6_a09e;
    let f = f64::from_bits((u64::from(hx) << 32) | (bits & 0xffff_ffff)) - 1.0;
    let hfsq = 0.5 * f * f;
    let s = f / (2.0 + f);
    let z = s * s;
    let w = z * z;
    let t1 = w * (LG[1] + w * (LG[3] + w * LG[5]));
    let t2 = z * (LG[0] + w * (LG[2] + w * (LG[4] + w * LG[6])));
    let dk = f64::from(k);
    s * (hfsq + t2 + t1) + dk * LN2_LO - hfsq + f + dk * LN2_HI
}

/// Tail magnitude as a function of `r = sqrt(-ln(min(p, 1 - p)))`.
#[inline(always)]
fn tail_value(r: f64) -> f64 {
    if r <= 5.0 {
        let r = r - 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        let r = r - 5.0;
        poly(&E, r) / poly(&F, r)
    }
}

/// `inverse_cdf(open_unit(b))` for every word of `bits`, written to `out`.
pub fn fill_from_bits(bits: &[u64], out: &mut [f64]) {
    NormalBatch::new().fill(bits, out);
}

const CHUNK: usize = 256;

/// Scratch space for converting batches of random words to normals.
///
/// Bit-identical to the scalar path; the central branch runs over the whole
/// batch first so it vectorizes, then the tail draws are compacted, evaluated
/// in one straight pass and scattered back.
pub struct NormalBatch {
    idx: [u32; CHUNK],
    ps: [f64; CHUNK],
    rs: [f64; CHUNK],
    vals: [f64; CHUNK],
}

impl Default for NormalBatch {
    fn default() -> Self {
        Self::new()
    }
}

impl NormalBatch {
    pub fn new() -> Self {
        Self {
            idx: [0; CHUNK],
            ps: [0.0; CHUNK],
            rs: [0.0; CHUNK],
            vals: [0.0; CHUNK],
        }
    }

    pub fn fill(&mut self, bits: &[u64], out: &mut [f64]) {
        fill_central(bits, out);
        for (b, o) in bits.chunks(CHUNK).zip(out.chunks_mut(CHUNK)) {
            self.fill_tails(b, o);
        }
    }

    fn fill_tails(&mut self, bits: &[u64], out: &mut [f64]) {
        let mut m = 0;
        for (i, &b) in bits.iter().enumerate() {
            // m <= i < CHUNK, so the mask never changes the index
            self.idx[m & (CHUNK - 1)] = i as u32;
            m += usize::from(in_tail(b));
        }
        for (p, &i) in self.ps[..m].iter_mut().zip(&self.idx[..m]) {
            *p = open_unit(bits[i as usize]);
        }
        let (ps, rs, vals) = (&self.ps[..m], &mut self.rs[..m], &mut self.vals[..m]);
        for ((v, r), &p) in vals.iter_mut().zip(rs.iter_mut()).zip(ps) {
            *r = (-ln(p.min(1.0 - p))).sqrt();
            let u = *r - 1.6;
            *v = (poly(&C, u) / poly(&D, u)).copysign(p - 0.5);
        }
        for j in 0..m {
            out[self.idx[j] as usize] = if self.rs[j] <= 5.0 {
                self.vals[j]
            } else {
                tail_value(self.rs[j]).copysign(self.ps[j] - 0.5)
            };
        }
    }
}

fn fill_central(bits: &[u64], out: &mut [f64]) {
    assert_eq!(bits.len(), out.len());
    for (z, &b) in out.iter_mut().zip(bits) {
        let q = open_unit(b) - 0.5;
        let r = 0.180625 - q * q;
        *z = q * poly(&A, r) / poly(&B, r);
    }
}

/// Map 64 random bits to a uniform in the open interval `(0, 1)`.
#[inline(always)]
pub fn open_unit(bits: u64) -> f64 {
    // `2^52 + m` built from its bit pattern, then `m + 0.5` exactly; unlike
    // an integer conversion this vectorizes without AVX-512.
    let shifted = f64::from_bits((bits >> 12) | TWO_POW_52.to_bits());
    (shifted - (TWO_POW_52 - 0.5)) * MANTISSA_SCALE
}
