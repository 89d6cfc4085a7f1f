use alloc::string::String;
use alloc::vec::Vec;

/// Splits on runs of Unicode whitespace and lowercases every token.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn splits_and_lowercases() {
        assert_eq!(
            tokenize("Patient FELL  hard"),
            vec!["patient", "fell", "hard"]
        );
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("\tA\nb\r\n"), vec!["a", "b"]);
    }

    proptest::proptest! {
        #[test]
        fn rejoining_is_idempotent(tokens in proptest::collection::vec("[a-z0-9/.-]{1,8}", 0..20)) {
            let joined = tokens.join(" ");
            proptest::prop_assert_eq!(tokenize(&joined), tokens);
        }
    }
}
