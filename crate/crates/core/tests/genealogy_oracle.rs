//! Rolling windows against a naive genealogy that keeps every ancestor array.

use alvar_core::genealogy::{distinct_labels, AncestryBuffer, EveRow};
use alvar_core::EnochWindow;
use proptest::prelude::*;

/// Enoch row of generation `m` at the newest generation, by composing the
/// stored ancestor arrays backwards from the identity.
fn naive_row(history: &[Vec<usize>], n: usize, m: usize) -> Vec<usize> {
    let r = history.len();
    (0..n)
        .map(|i| {
            let mut label = i;
            for ancestors in history[m..r].iter().rev() {
                label = ancestors[label];
            }
            label
        })
        .collect()
}

fn ancestor_arrays() -> impl Strategy<Value = (usize, Vec<Vec<usize>>)> {
    (1usize..=8).prop_flat_map(|n| (Just(n), prop::collection::vec(prop::collection::vec(0..n, n), 0..=10)))
}

proptest! {
    #[test]
    fn unbounded_window_matches_naive((n, history) in ancestor_arrays()) {
        let mut window = EnochWindow::new(n).unwrap();
        for (r, ancestors) in history.iter().enumerate() {
            window.advance(ancestors, usize::MAX).unwrap();
            let seen = &history[..=r];
            prop_assert_eq!(window.oldest_generation(), 0);
            prop_assert_eq!(window.newest_generation(), r + 1);
            for m in 0..=r + 1 {
                prop_assert_eq!(window.row(m).unwrap(), &naive_row(seen, n, m)[..]);
            }
        }
    }

    #[test]
    fn bounded_window_keeps_the_newest_rows((n, history) in ancestor_arrays(), max_rows in 1usize..5) {
        let mut window = EnochWindow::new(n).unwrap();
        for ancestors in &history {
            window.advance(ancestors, max_rows).unwrap();
        }
        let r = history.len();
        prop_assert!(window.len() <= max_rows.max(1));
        prop_assert_eq!(window.newest_generation(), r);
        for m in window.oldest_generation()..=r {
            prop_assert_eq!(window.row(m).unwrap(), &naive_row(&history, n, m)[..]);
        }
        if window.oldest_generation() > 0 {
            prop_assert!(window.row(window.oldest_generation() - 1).is_err());
        }
    }

    #[test]
    fn eve_row_and_buffer_match_naive((n, history) in ancestor_arrays(), depth in 0usize..12) {
        let mut eve = EveRow::new(n);
        let mut buffer = AncestryBuffer::new(n, depth);
        for ancestors in &history {
            eve.advance(ancestors).unwrap();
            buffer.push(ancestors).unwrap();
        }
        let r = history.len();
        let eve_naive = naive_row(&history, n, 0);
        prop_assert_eq!(eve.row(), &eve_naive[..]);
        prop_assert_eq!(eve.distinct_count(), distinct_labels(&eve_naive, n));
        prop_assert_eq!(buffer.available_lags(), depth.min(r));
        let mut visited = 0;
        buffer.for_each_row(|lag, row| {
            assert_eq!(row, &naive_row(&history, n, r - lag)[..]);
            visited += 1;
        });
        prop_assert_eq!(visited, depth.min(r) + 1);
    }

    #[test]
    fn distinct_counts_never_increase_with_age((n, history) in ancestor_arrays()) {
        let mut window = EnochWindow::new(n).unwrap();
        for ancestors in &history {
            window.advance(ancestors, usize::MAX).unwrap();
        }
        let counts: Vec<usize> = (0..=history.len())
            .map(|m| window.distinct_count(m).unwrap())
            .collect();
        prop_assert!(counts.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(*counts.last().unwrap(), n);
    }
}
