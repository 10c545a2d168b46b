//! Running extrema over fixed-length windows in O(1) amortised comparisons
//! per element (van Herk / Gil-Werman block decomposition).

/// For every window start `m` in `0..=seq.len()-k`, the best element of
/// `seq[m..m+k]` under `better`. `better(a, b)` must be a strict order
/// (`true` when `a` should replace `b`), so the winner does not depend on
/// evaluation order.
pub fn sliding_best<E: Copy>(seq: &[E], k: usize, better: impl Fn(&E, &E) -> bool) -> Vec<E> {
    assert!(k >= 1, "window must hold at least one element");
    let n = seq.len();
    if n < k {
        return Vec::new();
    }
    if k == 1 {
        return seq.to_vec();
    }
    let pick = |a: E, b: E| if better(&b, &a) { b } else { a };

    // prefix[i]: best from the start of i's block through i.
    // suffix[i]: best from i through the end of i's block.
    let mut prefix = seq.to_vec();
    let mut suffix = seq.to_vec();
    for i in 1..n {
        if i % k != 0 {
            prefix[i] = pick(prefix[i - 1], seq[i]);
        }
    }
    for i in (0..n - 1).rev() {
        if (i + 1) % k != 0 {
            suffix[i] = pick(seq[i], suffix[i + 1]);
        }
    }
    (0..=n - k)
        .map(|m| {
            if m % k == 0 {
                prefix[m + k - 1]
            } else {
                pick(suffix[m], prefix[m + k - 1])
            }
        })
        .collect()
}

/// Windowed maximum over `seq` with a window of `2*radius+1` centered on
/// each element, clipped at the ends.
pub fn centered_max(seq: &[u8], radius: usize) -> Vec<u8> {
    centered(seq, radius, u8::MIN, |a, b| a > b)
}

/// Windowed minimum, see [`centered_max`].
pub fn centered_min(seq: &[u8], radius: usize) -> Vec<u8> {
    centered(seq, radius, u8::MAX, |a, b| a < b)
}

fn centered(seq: &[u8], radius: usize, neutral: u8, better: impl Fn(&u8, &u8) -> bool) -> Vec<u8> {
    if radius == 0 {
        return seq.to_vec();
    }
    let mut padded = Vec::with_capacity(seq.len() + 2 * radius);
    padded.resize(radius, neutral);
    padded.extend_from_slice(seq);
    padded.resize(seq.len() + 2 * radius, neutral);
    sliding_best(&padded, 2 * radius + 1, better)
}
