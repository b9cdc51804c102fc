//! Concrete security bounds for hash-chain OTPs.
//!
//! Query budgets reach `2^128` and beyond, so quantities are carried as
//! base-2 logarithms. Small inputs also get an exact rational.

use serde::Serialize;

/// `log2(2^a + 2^b)` without leaving the log domain.
fn log2_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp2().ln_1p() / std::f64::consts::LN_2
}

/// An adversary budget, given either exactly or as `log2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Count {
    Exact(u128),
    Log2(f64),
}

impl Count {
    pub fn log2(self) -> f64 {
        match self {
            Count::Exact(0) => f64::NEG_INFINITY,
            Count::Exact(n) => (n as f64).log2(),
            Count::Log2(l) => l,
        }
    }

    fn exact(self) -> Option<u128> {
        match self {
            Count::Exact(n) => Some(n),
            Count::Log2(_) => None,
        }
    }
}

/// `(2Q + 2P + 1) / 2^S`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ChainAdvantage {
    pub log2: f64,
    /// Numerator of the exact value over `2^S`, when it fits.
    pub numerator: Option<u128>,
    pub s_bits: u32,
}

impl ChainAdvantage {
    /// As a probability; underflows to 0 below `2^-1074`.
    pub fn value(&self) -> f64 {
        self.log2.exp2().min(1.0)
    }
}

pub fn adv_chain(q: Count, p: Count, s_bits: u32) -> ChainAdvantage {
    let numerator = q.exact().zip(p.exact()).and_then(|(q, p)| {
        q.checked_mul(2)?
            .checked_add(p.checked_mul(2)?)?
            .checked_add(1)
    });
    let log_num = match numerator {
        Some(n) => (n as f64).log2(),
        None => log2_add(log2_add(q.log2() + 1.0, p.log2() + 1.0), 0.0),
    };
    ChainAdvantage {
        log2: log_num - s_bits as f64,
        numerator,
        s_bits,
    }
}

/// `max(0, 1 - leaves * x)` with `x = adv_chain(q, p, s)`.
pub fn scheme_secure_lower_bound(q: Count, p: Count, s_bits: u32, leaves: u64) -> f64 {
    assert!(leaves >= 1, "at least one leaf");
    let fail_log2 = adv_chain(q, p, s_bits).log2 + (leaves as f64).log2();
    if fail_log2 >= 0.0 {
        0.0
    } else {
        1.0 - fail_log2.exp2()
    }
}

/// `(1 - x)^leaves`, the bound for independent leaves.
pub fn scheme_secure_product(q: Count, p: Count, s_bits: u32, leaves: u64) -> f64 {
    let x = adv_chain(q, p, s_bits).value();
    product_form(x, leaves)
}

pub fn product_form(x: f64, leaves: u64) -> f64 {
    if x >= 1.0 {
        return 0.0;
    }
    (leaves as f64 * (-x).ln_1p()).exp()
}

pub fn union_form(x: f64, leaves: u64) -> f64 {
    (1.0 - leaves as f64 * x).max(0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct RequiredBits {
    pub s_bits: u32,
    pub words: u32,
}

fn ceil_log2(n: u64) -> u32 {
    if n <= 1 {
        0
    } else {
        64 - (n - 1).leading_zeros()
    }
}

/// `S = lambda + 2 + ceil(log2 leaves)` and the mnemonic length for `S`
/// bits at 11 bits per word.
pub fn required_bits(lambda: u32, leaves: u64) -> RequiredBits {
    let s_bits = lambda + 2 + ceil_log2(leaves.max(1));
    RequiredBits {
        s_bits,
        words: s_bits.div_ceil(11),
    }
}

/// Aligned `key = value` report for the calculator.
pub fn report(lambda: u32, leaves: u64, p: u64) -> Vec<String> {
    let r = required_bits(lambda, leaves);
    let q = Count::Log2(lambda as f64);
    let p = Count::Exact(p as u128);
    let adv = adv_chain(q, p, r.s_bits);
    let rows = [
        ("lambda", lambda.to_string()),
        ("leaves", leaves.to_string()),
        ("S", r.s_bits.to_string()),
        ("mnemonic_words", r.words.to_string()),
        ("log2_adv_chain", format!("{:.4}", adv.log2)),
        (
            "secure_lower_bound",
            format!("{:.6}", scheme_secure_lower_bound(q, p, r.s_bits, leaves)),
        ),
        (
            "secure_product",
            format!("{:.6}", scheme_secure_product(q, p, r.s_bits, leaves)),
        ),
    ];
    rows.iter().map(|(k, v)| format!("{k:>18}={v}")).collect()
}
