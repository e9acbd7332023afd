/// Levenshtein distance over Unicode scalar values, ignoring case.
pub fn levenshtein_ci(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().flat_map(char::to_lowercase).collect();
    let b: Vec<char> = b.chars().flat_map(char::to_lowercase).collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut curr = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        curr[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let cost = usize::from(ca != cb);
            curr[j + 1] = (prev[j + 1] + 1).min(curr[j] + 1).min(prev[j] + cost);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

/// Largest distance at which `candidate` may replace an unknown name:
/// `max(2, ceil(0.4 * len(candidate)))`.
pub fn max_distance(candidate: &str) -> usize {
    let len = candidate.chars().count();
    (len * 2).div_ceil(5).max(2)
}
