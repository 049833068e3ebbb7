/// Lowercases and splits on anything that is not alphanumeric. No stemming or
/// stop-word removal; the TF-IDF featurizer shares this exact tokenizer.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}
