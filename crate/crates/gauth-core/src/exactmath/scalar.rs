use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};
use std::str::FromStr;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::MathError;

/// Exact rational number: arbitrary-precision numerator over a positive
/// denominator, always stored in lowest terms. The canonical zero is `0/1`.
///
/// All arithmetic is exact; equality is literal equality of the canonical
/// form.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Scalar {
    numer: BigInt,
    denom: BigInt,
}

impl Scalar {
    /// Builds `numer/denom`, reducing to lowest terms with a positive
    /// denominator.
    pub fn new(numer: impl Into<BigInt>, denom: impl Into<BigInt>) -> Result<Self, MathError> {
        let numer = numer.into();
        let mut denom = denom.into();
        if denom.is_zero() {
            return Err(MathError::ZeroDenominator);
        }
        let mut numer = numer;
        if denom.is_negative() {
            numer = -numer;
            denom = -denom;
        }
        let g = numer.gcd(&denom);
        if !g.is_one() {
            numer /= &g;
            denom /= &g;
        }
        Ok(Scalar { numer, denom })
    }

    pub fn from_integer(n: impl Into<BigInt>) -> Self {
        Scalar { numer: n.into(), denom: BigInt::one() }
    }

    /// Internal constructor for callers that maintain the lowest-terms
    /// invariant themselves (hot paths that fold fractions incrementally).
    pub(crate) fn from_coprime_parts(numer: BigInt, denom: BigInt) -> Self {
        debug_assert!(denom.is_positive(), "denominator must be positive");
        debug_assert!(numer.gcd(&denom).is_one(), "parts must be coprime");
        Scalar { numer, denom }
    }

    pub fn zero() -> Self {
        Scalar::from_integer(0)
    }

    pub fn one() -> Self {
        Scalar::from_integer(1)
    }

    pub fn numer(&self) -> &BigInt {
        &self.numer
    }

    pub fn denom(&self) -> &BigInt {
        &self.denom
    }

    pub fn is_zero(&self) -> bool {
        self.numer.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.numer.is_one() && self.denom.is_one()
    }

    pub fn is_negative(&self) -> bool {
        self.numer.is_negative()
    }

    /// True when the denominator is 1.
    pub fn is_integer(&self) -> bool {
        self.denom.is_one()
    }

    pub fn recip(&self) -> Result<Self, MathError> {
        if self.is_zero() {
            return Err(MathError::ZeroDenominator);
        }
        if self.numer.is_negative() {
            Ok(Scalar { numer: -self.denom.clone(), denom: -self.numer.clone() })
        } else {
            Ok(Scalar { numer: self.denom.clone(), denom: self.numer.clone() })
        }
    }

    /// Canonical byte encoding, bijective on the lowest-terms form:
    /// sign byte (`0x00` nonnegative, `0x01` negative), then the numerator
    /// magnitude as a 4-byte big-endian length followed by minimal
    /// big-endian bytes (empty for zero), then the denominator likewise.
    pub fn to_canonical_bytes(&self) -> Vec<u8> {
        let num_mag = magnitude_bytes(&self.numer);
        let den_mag = magnitude_bytes(&self.denom);
        let mut out = Vec::with_capacity(1 + 8 + num_mag.len() + den_mag.len());
        out.push(if self.numer.is_negative() { 0x01 } else { 0x00 });
        out.extend_from_slice(&(num_mag.len() as u32).to_be_bytes());
        out.extend_from_slice(&num_mag);
        out.extend_from_slice(&(den_mag.len() as u32).to_be_bytes());
        out.extend_from_slice(&den_mag);
        out
    }

    /// Decodes a canonical encoding that must span the whole buffer.
    pub fn from_canonical_bytes(buf: &[u8]) -> Result<Self, MathError> {
        let (scalar, used) = Self::decode_prefix(buf)?;
        if used != buf.len() {
            return Err(MathError::MalformedEncoding("trailing bytes"));
        }
        Ok(scalar)
    }

    /// Decodes a canonical encoding from the front of `buf`, returning the
    /// scalar and the number of bytes consumed. Rejects every non-canonical
    /// form (leading zero bytes, negative zero, unreduced fractions, zero or
    /// non-positive denominators).
    pub fn decode_prefix(buf: &[u8]) -> Result<(Self, usize), MathError> {
        let mut at = 0usize;
        let sign = *buf.get(at).ok_or(MathError::MalformedEncoding("missing sign byte"))?;
        if sign > 1 {
            return Err(MathError::MalformedEncoding("invalid sign byte"));
        }
        at += 1;
        let (num_mag, used) = read_magnitude(&buf[at..])?;
        at += used;
        let (den_mag, used) = read_magnitude(&buf[at..])?;
        at += used;

        if num_mag.is_zero() && sign == 1 {
            return Err(MathError::MalformedEncoding("negative zero"));
        }
        if den_mag.is_zero() {
            return Err(MathError::MalformedEncoding("zero denominator"));
        }
        if !num_mag.gcd(&den_mag).is_one() {
            return Err(MathError::MalformedEncoding("fraction not in lowest terms"));
        }
        let numer = BigInt::from_biguint(if sign == 1 { Sign::Minus } else { Sign::Plus }, num_mag);
        let denom = BigInt::from_biguint(Sign::Plus, den_mag);
        Ok((Scalar { numer, denom }, at))
    }
}

/// Both operands' parts as `i64`s when they fit, enabling allocation-free
/// small arithmetic (products of two parts then always fit `i128`).
fn small_parts(a: &Scalar, b: &Scalar) -> Option<(i128, i128, i128, i128)> {
    use num_traits::ToPrimitive;
    Some((
        a.numer.to_i64()? as i128,
        a.denom.to_i64()? as i128,
        b.numer.to_i64()? as i128,
        b.denom.to_i64()? as i128,
    ))
}

fn gcd_i128(mut a: i128, mut b: i128) -> i128 {
    a = a.abs();
    b = b.abs();
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn magnitude_bytes(n: &BigInt) -> Vec<u8> {
    if n.is_zero() {
        Vec::new()
    } else {
        n.magnitude().to_bytes_be()
    }
}

fn read_magnitude(buf: &[u8]) -> Result<(BigUint, usize), MathError> {
    if buf.len() < 4 {
        return Err(MathError::MalformedEncoding("truncated length"));
    }
    let len = u32::from_be_bytes([buf[0], buf[1], buf[2], buf[3]]) as usize;
    let rest = &buf[4..];
    if rest.len() < len {
        return Err(MathError::MalformedEncoding("truncated magnitude"));
    }
    let mag = &rest[..len];
    if !mag.is_empty() && mag[0] == 0 {
        return Err(MathError::MalformedEncoding("leading zero in magnitude"));
    }
    Ok((BigUint::from_bytes_be(mag), 4 + len))
}

// Arithmetic follows the classic reduced-fraction recipes: cross-cancel
// before multiplying so intermediate products stay small and results come
// out already in lowest terms.

impl Add for &Scalar {
    type Output = Scalar;

    fn add(self, other: &Scalar) -> Scalar {
        if self.is_zero() {
            return other.clone();
        }
        if other.is_zero() {
            return self.clone();
        }
        if self.denom.is_one() && other.denom.is_one() {
            return Scalar { numer: &self.numer + &other.numer, denom: BigInt::one() };
        }
        let d1 = self.denom.gcd(&other.denom);
        if d1.is_one() {
            return Scalar {
                numer: &self.numer * &other.denom + &other.numer * &self.denom,
                denom: &self.denom * &other.denom,
            };
        }
        let sd = &self.denom / &d1;
        let od = &other.denom / &d1;
        let t = &self.numer * &od + &other.numer * &sd;
        let d2 = t.gcd(&d1);
        Scalar { numer: t / &d2, denom: sd * (&other.denom / d2) }
    }
}

impl Sub for &Scalar {
    type Output = Scalar;

    fn sub(self, other: &Scalar) -> Scalar {
        self + &(-other)
    }
}

impl Mul for &Scalar {
    type Output = Scalar;

    fn mul(self, other: &Scalar) -> Scalar {
        if self.is_zero() || other.is_zero() {
            return Scalar::zero();
        }
        if self.denom.is_one() && other.denom.is_one() {
            return Scalar { numer: &self.numer * &other.numer, denom: BigInt::one() };
        }
        if let Some((an, ad, bn, bd)) = small_parts(self, other) {
            let g1 = gcd_i128(an, bd);
            let g2 = gcd_i128(bn, ad);
            return Scalar {
                numer: BigInt::from((an / g1) * (bn / g2)),
                denom: BigInt::from((ad / g2) * (bd / g1)),
            };
        }
        let d1 = self.numer.gcd(&other.denom);
        let d2 = other.numer.gcd(&self.denom);
        Scalar {
            numer: (&self.numer / &d1) * (&other.numer / &d2),
            denom: (&self.denom / &d2) * (&other.denom / &d1),
        }
    }
}

impl Div for &Scalar {
    type Output = Scalar;

    /// Panics when dividing by zero; callers guard fallible paths.
    fn div(self, other: &Scalar) -> Scalar {
        assert!(!other.is_zero(), "scalar division by zero");
        if self.is_zero() {
            return Scalar::zero();
        }
        if let Some((an, ad, bn, bd)) = small_parts(self, other) {
            let mut n = an * bd;
            let mut d = ad * bn;
            if d < 0 {
                n = -n;
                d = -d;
            }
            let g = gcd_i128(n, d);
            return Scalar { numer: BigInt::from(n / g), denom: BigInt::from(d / g) };
        }
        let d1 = self.numer.gcd(&other.numer);
        let d2 = other.denom.gcd(&self.denom);
        let mut numer = (&self.numer / &d1) * (&other.denom / &d2);
        let mut denom = (&self.denom / &d2) * (&other.numer / &d1);
        if denom.is_negative() {
            numer = -numer;
            denom = -denom;
        }
        Scalar { numer, denom }
    }
}

impl Neg for &Scalar {
    type Output = Scalar;

    fn neg(self) -> Scalar {
        Scalar { numer: -self.numer.clone(), denom: self.denom.clone() }
    }
}

macro_rules! forward_owned_binop {
    ($($trait:ident, $method:ident;)*) => {$(
        impl $trait for Scalar {
            type Output = Scalar;
            fn $method(self, other: Scalar) -> Scalar {
                (&self).$method(&other)
            }
        }
        impl $trait<&Scalar> for Scalar {
            type Output = Scalar;
            fn $method(self, other: &Scalar) -> Scalar {
                (&self).$method(other)
            }
        }
    )*};
}

forward_owned_binop! {
    Add, add;
    Sub, sub;
    Mul, mul;
    Div, div;
}

impl Neg for Scalar {
    type Output = Scalar;

    fn neg(self) -> Scalar {
        Scalar { numer: -self.numer, denom: self.denom }
    }
}

impl AddAssign<&Scalar> for Scalar {
    fn add_assign(&mut self, other: &Scalar) {
        *self = &*self + other;
    }
}

impl SubAssign<&Scalar> for Scalar {
    fn sub_assign(&mut self, other: &Scalar) {
        *self = &*self - other;
    }
}

impl MulAssign<&Scalar> for Scalar {
    fn mul_assign(&mut self, other: &Scalar) {
        *self = &*self * other;
    }
}

impl PartialOrd for Scalar {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scalar {
    fn cmp(&self, other: &Self) -> Ordering {
        // Denominators are positive, so cross-multiplication preserves order.
        (&self.numer * &other.denom).cmp(&(&other.numer * &self.denom))
    }
}

impl fmt::Display for Scalar {
    /// Integers print as plain decimals, everything else as `num/den`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.denom.is_one() {
            write!(f, "{}", self.numer)
        } else {
            write!(f, "{}/{}", self.numer, self.denom)
        }
    }
}

impl FromStr for Scalar {
    type Err = MathError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse_err = || MathError::ParseScalar(s.to_string());
        match s.split_once('/') {
            Some((num, den)) => {
                let numer = BigInt::from_str(num.trim()).map_err(|_| parse_err())?;
                let denom = BigInt::from_str(den.trim()).map_err(|_| parse_err())?;
                Scalar::new(numer, denom).map_err(|_| parse_err())
            }
            None => Ok(Scalar::from_integer(BigInt::from_str(s.trim()).map_err(|_| parse_err())?)),
        }
    }
}

impl Serialize for Scalar {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Scalar {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

impl From<i64> for Scalar {
    fn from(n: i64) -> Self {
        Scalar::from_integer(n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(text: &str) -> Scalar {
        text.parse().unwrap()
    }

    #[test]
    fn construction_reduces_to_lowest_terms() {
        let a = Scalar::new(6, -4).unwrap();
        assert_eq!(a.numer(), &BigInt::from(-3));
        assert_eq!(a.denom(), &BigInt::from(2));
        assert_eq!(Scalar::new(0, 7).unwrap(), Scalar::zero());
        assert!(matches!(Scalar::new(1, 0), Err(MathError::ZeroDenominator)));
    }

    #[test]
    fn display_and_parse_round_trip() {
        for text in ["0", "-7", "3/4", "-22/7", "2147483648"] {
            assert_eq!(s(text).to_string(), text);
        }
        assert_eq!(s("4/2"), Scalar::from_integer(2));
        assert_eq!(s("4/2").to_string(), "2");
        assert!("1/0".parse::<Scalar>().is_err());
        assert!("abc".parse::<Scalar>().is_err());
    }

    #[test]
    fn arithmetic_matches_independent_rational_implementation() {
        use num::BigRational;

        let to_oracle = |x: &Scalar| -> BigRational {
            let n: num::BigInt = x.numer().to_string().parse().unwrap();
            let d: num::BigInt = x.denom().to_string().parse().unwrap();
            BigRational::new(n, d)
        };
        let from_oracle = |x: &BigRational| -> Scalar {
            Scalar::new(
                BigInt::from_str(&x.numer().to_string()).unwrap(),
                BigInt::from_str(&x.denom().to_string()).unwrap(),
            )
            .unwrap()
        };

        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(7);
        for _ in 0..200 {
            let a = Scalar::new(rng.gen_range(-1_000_000i64..=1_000_000), rng.gen_range(1i64..=9999)).unwrap();
            let b = Scalar::new(rng.gen_range(-1_000_000i64..=1_000_000), rng.gen_range(1i64..=9999)).unwrap();
            let (oa, ob) = (to_oracle(&a), to_oracle(&b));
            assert_eq!(&a + &b, from_oracle(&(&oa + &ob)));
            assert_eq!(&a - &b, from_oracle(&(&oa - &ob)));
            assert_eq!(&a * &b, from_oracle(&(&oa * &ob)));
            if !b.is_zero() {
                assert_eq!(&a / &b, from_oracle(&(&oa / &ob)));
            }
            assert_eq!(a.cmp(&b), oa.cmp(&ob));
        }
    }

    #[test]
    fn canonical_encoding_round_trips() {
        for text in ["0", "1", "-1", "13/36", "-2147483648", "123456789123456789/2"] {
            let x = s(text);
            let bytes = x.to_canonical_bytes();
            assert_eq!(Scalar::from_canonical_bytes(&bytes).unwrap(), x);
        }
        // Canonical zero: sign 0, empty numerator magnitude, denominator 1.
        assert_eq!(Scalar::zero().to_canonical_bytes(), vec![0, 0, 0, 0, 0, 0, 0, 0, 1, 1]);
    }

    #[test]
    fn decoder_rejects_non_canonical_forms() {
        let cases: &[(&[u8], &str)] = &[
            (&[], "missing sign"),
            (&[2, 0, 0, 0, 0, 0, 0, 0, 1, 1], "bad sign byte"),
            (&[1, 0, 0, 0, 0, 0, 0, 0, 1, 1], "negative zero"),
            (&[0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 1], "leading zero in numerator"),
            (&[0, 0, 0, 0, 1, 2, 0, 0, 0, 1, 4], "not lowest terms"),
            (&[0, 0, 0, 0, 0, 0, 0, 0, 0], "zero denominator"),
            (&[0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 9], "trailing bytes"),
            (&[0, 0, 0, 0, 5, 1], "truncated magnitude"),
        ];
        for (bytes, why) in cases {
            assert!(Scalar::from_canonical_bytes(bytes).is_err(), "should reject: {why}");
        }
    }

    #[test]
    fn encoding_is_prefix_free_in_sequence() {
        let xs = [s("3/4"), s("-9"), s("0")];
        let mut buf = Vec::new();
        for x in &xs {
            buf.extend_from_slice(&x.to_canonical_bytes());
        }
        let mut at = 0;
        for x in &xs {
            let (decoded, used) = Scalar::decode_prefix(&buf[at..]).unwrap();
            assert_eq!(&decoded, x);
            at += used;
        }
        assert_eq!(at, buf.len());
    }

    #[test]
    fn recip_and_division_by_zero() {
        assert_eq!(s("-3/4").recip().unwrap(), s("-4/3"));
        assert!(Scalar::zero().recip().is_err());
        let caught = std::panic::catch_unwind(|| &s("1") / &Scalar::zero());
        assert!(caught.is_err());
    }
}
