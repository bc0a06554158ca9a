use super::vocab::{TokenId, TokenKind, Vocab};
use super::EncodeError;

/// Rounds to thousandths, half away from zero, as an integer count of
/// thousandths.
pub fn quantize_milli(x: f64) -> i64 {
    (x * 1000.0).round() as i64
}

/// `x` rounded to 3 decimals.
pub fn quantize(x: f64) -> f64 {
    quantize_milli(x) as f64 / 1000.0
}

/// Largest encodable magnitude in thousandths.
pub fn max_milli(vocab: &Vocab) -> i64 {
    i64::from(vocab.int_range()) * 1000 + 999
}

/// Splits `x` into a signed integer-part token and a fractional token.
pub fn encode_number(vocab: &Vocab, x: f64) -> Result<(TokenId, TokenId), EncodeError> {
    if !x.is_finite() {
        return Err(EncodeError::OutOfRange { value: x });
    }
    let milli = quantize_milli(x);
    if milli.abs() > max_milli(vocab) {
        return Err(EncodeError::OutOfRange { value: x });
    }
    let magnitude = milli.unsigned_abs();
    let int = vocab.int_token(milli < 0, (magnitude / 1000) as u32);
    let frac = vocab.frac_token((magnitude % 1000) as u16);
    Ok((int, frac))
}

/// Inverse of [`encode_number`]; `None` unless the pair is an integer
/// token followed by a fractional token.
pub fn decode_number(vocab: &Vocab, int: TokenId, frac: TokenId) -> Option<f64> {
    decode_milli(vocab, int, frac).map(|m| m as f64 / 1000.0)
}

pub(super) fn decode_milli(vocab: &Vocab, int: TokenId, frac: TokenId) -> Option<i64> {
    match (vocab.kind(int)?, vocab.kind(frac)?) {
        (TokenKind::Int { negative, magnitude }, TokenKind::Frac(f)) => {
            let m = i64::from(magnitude) * 1000 + i64::from(f);
            Some(if negative { -m } else { m })
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn forms(vocab: &Vocab, x: f64) -> (String, String) {
        let (i, f) = encode_number(vocab, x).unwrap();
        (vocab.form(i).to_string(), vocab.form(f).to_string())
    }

    #[test]
    fn figure_values() {
        let v = Vocab::default();
        assert_eq!(forms(&v, 2.775), ("2".into(), ".775".into()));
        assert_eq!(forms(&v, -0.640), ("-0".into(), ".640".into()));
        assert_eq!(forms(&v, -10.845), ("-10".into(), ".845".into()));
        assert_eq!(forms(&v, 0.0), ("0".into(), ".000".into()));
        assert_eq!(forms(&v, -7.24), ("-7".into(), ".240".into()));
    }

    #[test]
    fn rounding_is_half_away_from_zero() {
        let v = Vocab::default();
        assert_eq!(forms(&v, 1.0005), ("1".into(), ".001".into()));
        assert_eq!(forms(&v, -1.0005), ("-1".into(), ".001".into()));
        assert_eq!(forms(&v, -0.0004), ("0".into(), ".000".into()));
        assert_eq!(forms(&v, 0.9996), ("1".into(), ".000".into()));
    }

    #[test]
    fn range_limits() {
        let v = Vocab::default();
        assert!(encode_number(&v, 99.999).is_ok());
        assert!(encode_number(&v, -99.999).is_ok());
        assert!(encode_number(&v, 99.9995).is_err());
        assert!(encode_number(&v, 100.0).is_err());
        assert!(encode_number(&v, f64::NAN).is_err());
        assert!(encode_number(&v, f64::INFINITY).is_err());
    }

    #[test]
    fn decode_inverts_every_milli_value() {
        let v = Vocab::default();
        for m in (-99_999i64..=99_999).step_by(7) {
            let x = m as f64 / 1000.0;
            let (i, f) = encode_number(&v, x).unwrap();
            assert_eq!(decode_milli(&v, i, f), Some(m));
            assert_eq!(decode_number(&v, i, f), Some(x));
        }
    }
}
