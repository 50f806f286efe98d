use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;

use super::CodecError;

/// URL-safe alphabet, no padding.
pub fn encode_base64url(bytes: &[u8]) -> String {
    URL_SAFE_NO_PAD.encode(bytes)
}

pub fn decode_base64url(text: &str) -> Result<Vec<u8>, CodecError> {
    if let Some((position, character)) = text
        .char_indices()
        .find(|(_, c)| !(c.is_ascii_alphanumeric() || *c == '-' || *c == '_'))
    {
        return Err(CodecError::Alphabet {
            position,
            character,
        });
    }
    URL_SAFE_NO_PAD
        .decode(text)
        .map_err(|_| CodecError::Base64Length)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty() {
        assert_eq!(encode_base64url(&[]), "");
        assert_eq!(decode_base64url("").unwrap(), Vec::<u8>::new());
    }

    #[test]
    fn high_bytes_stay_url_safe() {
        let s = encode_base64url(&[0xFF, 0xFE, 0xFB, 0xFF]);
        assert_eq!(s, "__77_w");
        assert!(s
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_'));
    }

    #[test]
    fn rejects_standard_alphabet_and_padding() {
        assert_eq!(
            decode_base64url("ab+c"),
            Err(CodecError::Alphabet {
                position: 2,
                character: '+'
            })
        );
        assert!(matches!(
            decode_base64url("YQ=="),
            Err(CodecError::Alphabet { position: 2, .. })
        ));
        assert_eq!(decode_base64url("a"), Err(CodecError::Base64Length));
    }

    proptest! {
        #[test]
        fn round_trip(bytes in proptest::collection::vec(any::<u8>(), 1..=64)) {
            let s = encode_base64url(&bytes);
            prop_assert!(!s.contains('='));
            prop_assert_eq!(decode_base64url(&s).unwrap(), bytes);
        }
    }
}
