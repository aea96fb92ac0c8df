/// Length, in characters, of the longest contiguous substring shared by `a`
/// and `b`. Rolling-row dynamic program, O(|a|·|b|) time and O(|b|) space.
pub fn longest_common_substring_len(a: &str, b: &str) -> usize {
    if a.is_ascii() && b.is_ascii() {
        return lcs_slices(a.as_bytes(), b.as_bytes());
    }
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    lcs_slices(&a, &b)
}

pub(crate) fn lcs_slices<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    let mut best = 0;
    for ca in a {
        for (j, cb) in b.iter().enumerate() {
            cur[j + 1] = if ca == cb { prev[j] + 1 } else { 0 };
            best = best.max(cur[j + 1]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    best
}
