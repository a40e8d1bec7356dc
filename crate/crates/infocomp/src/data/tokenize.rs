//! Stateless hashing tokenizer.
//!
//! A fixed hash vocabulary avoids building a learned vocabulary over the
//! whole task sequence, which would leak future-task information in a
//! continual setting. Ids depend only on the string and the vocab size.

/// 64-bit FNV-1a. Stable across platforms and runs.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Lowercase, split on anything non-alphanumeric, hash each token into
/// [1, vocab_size). Id 0 is reserved for the classification token.
pub fn tokenize_hash(text: &str, vocab_size: usize, max_text_len: usize) -> Vec<usize> {
    assert!(vocab_size >= 2, "vocab_size must be at least 2");
    let lower = text.to_lowercase();
    lower
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| 1 + (fnv1a64(t.as_bytes()) % (vocab_size as u64 - 1)) as usize)
        .take(max_text_len)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_empty_ids() {
        assert!(tokenize_hash("", 512, 16).is_empty());
        assert!(tokenize_hash("  ,,  ", 512, 16).is_empty());
    }

    #[test]
    fn tokenizer_is_deterministic() {
        let a = tokenize_hash("the quick brown fox", 512, 16);
        let b = tokenize_hash("the quick brown fox", 512, 16);
        assert_eq!(a, b);
    }

    #[test]
    fn case_folding_maps_to_same_id() {
        let ids = tokenize_hash("Hello, hello", 4096, 16);
        assert_eq!(ids.len(), 2);
        assert_eq!(ids[0], ids[1]);
    }

    #[test]
    fn ids_stay_in_range_and_avoid_cls() {
        let ids = tokenize_hash("a b c d e f g h i j k l m n o p", 7, 100);
        assert!(ids.iter().all(|&id| id >= 1 && id < 7));
    }

    #[test]
    fn truncation_applies() {
        let ids = tokenize_hash("a b c d e", 512, 3);
        assert_eq!(ids.len(), 3);
    }
}
