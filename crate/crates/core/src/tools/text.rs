use std::collections::HashMap;

/// Unicode-lowercases `q` and drops every whitespace character.
pub fn normalize_query(q: &str) -> String {
    q.chars().filter(|c| !c.is_whitespace()).flat_map(char::to_lowercase).collect()
}

/// Longest common block of `a[alo..ahi]` and `b[blo..bhi]`, preferring the
/// earliest start in `a`, then in `b`. Returns `(i, j, len)`.
#[allow(clippy::needless_range_loop)]
fn longest_match(a: &[char], b: &[char], alo: usize, ahi: usize, blo: usize, bhi: usize) -> (usize, usize, usize) {
    let (mut best_i, mut best_j, mut best_len) = (alo, blo, 0);
    // run[j + 1] = length of the common suffix ending at a[i], b[j]
    let mut prev = vec![0usize; bhi - blo + 1];
    let mut cur = vec![0usize; bhi - blo + 1];
    for i in alo..ahi {
        for j in blo..bhi {
            let k = j - blo;
            cur[k + 1] = if a[i] == b[j] { prev[k] + 1 } else { 0 };
            if cur[k + 1] > best_len {
                best_len = cur[k + 1];
                best_i = i + 1 - best_len;
                best_j = j + 1 - best_len;
            }
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    (best_i, best_j, best_len)
}

/// Total characters matched by recursively taking longest common blocks.
fn matched_chars(a: &[char], b: &[char]) -> usize {
    let mut total = 0;
    let mut stack = vec![(0, a.len(), 0, b.len())];
    while let Some((alo, ahi, blo, bhi)) = stack.pop() {
        if alo >= ahi || blo >= bhi {
            continue;
        }
        let (i, j, k) = longest_match(a, b, alo, ahi, blo, bhi);
        if k == 0 {
            continue;
        }
        total += k;
        stack.push((alo, i, blo, j));
        stack.push((i + k, ahi, j + k, bhi));
    }
    total
}

/// Ratcliff/Obershelp similarity `2M / (|a| + |b|)`; 1 when both are empty.
///
/// Block matching depends on argument order (`"tide"`/`"diet"` match 1 or 2
/// characters), so the larger of the two orientations is returned.
pub fn similarity(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let total = a.len() + b.len();
    if total == 0 {
        return 1.0;
    }
    let matched = matched_chars(&a, &b).max(matched_chars(&b, &a));
    2.0 * matched as f64 / total as f64
}

/// Upper bound on [`similarity`] from character multiset overlap.
pub fn similarity_upper_bound(a: &str, b: &str) -> f64 {
    let mut counts: HashMap<char, isize> = HashMap::new();
    let mut total = 0;
    for c in a.chars() {
        *counts.entry(c).or_default() += 1;
        total += 1;
    }
    let mut shared = 0;
    for c in b.chars() {
        total += 1;
        if let Some(n) = counts.get_mut(&c).filter(|n| **n > 0) {
            *n -= 1;
            shared += 1;
        }
    }
    if total == 0 {
        1.0
    } else {
        2.0 * shared as f64 / total as f64
    }
}
