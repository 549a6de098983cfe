//! Independent re-derivations used as test oracles.

use advtext_core::models::{Backend, ClassifierHandle};

/// `grad J(class) . (x_after - x_before)` computed by summing gradient
/// entries at the one-hot cells of each text, never building a grid.
pub fn sparse_dot(h: &ClassifierHandle, before: &str, after: &str, class: usize) -> f64 {
    let Backend::Char { alphabet, len, .. } = h.backend() else {
        panic!("char model expected")
    };
    let (_, g) = h.input_gradient(before, class).unwrap();
    let width = alphabet.len();
    let hot = |text: &str| -> Vec<(usize, usize)> {
        text.chars()
            .take(*len)
            .enumerate()
            .filter_map(|(p, c)| alphabet.index_of(c).map(|i| (p, i)))
            .collect()
    };
    let sum = |cells: Vec<(usize, usize)>| cells.into_iter().map(|(p, i)| g.data()[p * width + i]).sum::<f64>();
    sum(hot(after)) - sum(hot(before))
}
