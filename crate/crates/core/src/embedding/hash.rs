/// Tag written into store headers for [`content_hash`].
pub const HASH_ALGORITHM: &str = "fnv1a64-ws";

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Trims and collapses every whitespace run to a single ASCII space.
pub fn canonical_text(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// 64-bit FNV-1a over the UTF-8 bytes of [`canonical_text`].
pub fn content_hash(text: &str) -> u64 {
    canonical_text(text).bytes().fold(FNV_OFFSET, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_vectors() {
        // reference FNV-1a 64 values
        assert_eq!(content_hash(""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(content_hash("a"), 0xaf63_dc4c_8601_ec8c);
        assert_eq!(content_hash("foobar"), 0x8594_4171_f739_67e8);
    }

    #[test]
    fn whitespace_is_canonicalized() {
        assert_eq!(
            content_hash("  PROCESSOR   shall\n act "),
            content_hash("PROCESSOR shall act")
        );
        assert_ne!(
            content_hash("PROCESSOR shall act"),
            content_hash("processor shall act")
        );
    }
}
