//! Benchmark programs: the class definitions from `lime/` plus a generated
//! `Start` class, and the output each one must produce.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::model::Value;
use crate::rng::SplitMix64;

pub const DOUBLER: &str = include_str!("../../lime/doubler.lime");
pub const PRIORITY_QUEUE: &str = include_str!("../../lime/priority_queue.lime");
pub const LEAF_TREE: &str = include_str!("../../lime/leaf_tree.lime");
pub const MAP_REDUCE: &str = include_str!("../../lime/map_reduce.lime");

/// Non-members probed by the leaf-tree driver.
pub const LEAF_TREE_PROBES: usize = 1000;

#[derive(Clone, Debug)]
pub struct Workload {
    pub source: String,
    pub expected: Vec<Value>,
}

fn classes(src: &str) -> &str {
    let at = src
        .find("\nclass Start")
        .expect("program has a Start class");
    &src[..at + 1]
}

pub fn doubler() -> Workload {
    Workload {
        source: DOUBLER.to_string(),
        expected: vec![Value::Int(6), Value::Int(6)],
    }
}

/// Insert `n` seeded values, then remove `n` times printing each result.
pub fn priority_queue(n: usize, seed: u64) -> Workload {
    let mut rng = SplitMix64::new(seed);
    let values: Vec<i64> = (0..n).map(|_| rng.positive()).collect();
    let mut source = classes(PRIORITY_QUEUE).to_string();
    source.push_str(
        "class Start\n    var q: PriorityQueue\n    init()\n        q := new PriorityQueue()\n",
    );
    for v in &values {
        let _ = writeln!(source, "        q.add({v})");
    }
    for _ in 0..n {
        source.push_str("        print(q.remove())\n");
    }
    let mut sorted = values;
    sorted.sort_unstable();
    Workload {
        source,
        expected: sorted.into_iter().map(Value::Int).collect(),
    }
}

/// Insert `n` seeded values, then query every member followed by
/// [`LEAF_TREE_PROBES`] seeded non-members.
pub fn leaf_tree(n: usize, seed: u64) -> Workload {
    let n = n.max(1);
    let mut rng = SplitMix64::new(seed);
    let values: Vec<i64> = (0..n).map(|_| rng.positive()).collect();
    let members: BTreeSet<i64> = values.iter().copied().collect();
    let mut probes = Vec::with_capacity(LEAF_TREE_PROBES);
    while probes.len() < LEAF_TREE_PROBES {
        let v = rng.positive();
        if !members.contains(&v) {
            probes.push(v);
        }
    }
    let mut source = classes(LEAF_TREE).to_string();
    let _ = writeln!(
        source,
        "class Start\n    var t: Node\n    init()\n        t := new Node({})",
        values[0]
    );
    for v in &values[1..] {
        let _ = writeln!(source, "        t.add({v})");
    }
    for v in values.iter().chain(&probes) {
        let _ = writeln!(source, "        print(t.has({v}))");
    }
    let mut expected = vec![Value::Bool(true); values.len()];
    expected.extend(std::iter::repeat_n(Value::Bool(false), probes.len()));
    Workload { source, expected }
}

/// Sum of squares of `0..num`, printed once per repetition.
pub fn map_reduce(num: usize, repeat: usize) -> Workload {
    let marker = "num, repeat := 4, 1";
    assert!(MAP_REDUCE.contains(marker));
    let source = MAP_REDUCE.replace(marker, &format!("num, repeat := {num}, {repeat}"));
    let n = num as i64;
    let sum = n * (n - 1) * (2 * n - 1) / 6;
    Workload {
        source,
        expected: vec![Value::Int(sum); repeat],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{load, ValidateOptions};

    fn parses(w: &Workload) {
        load(
            &w.source,
            ValidateOptions {
                require_start: true,
            },
        )
        .unwrap();
    }

    #[test]
    fn generated_sources_validate() {
        parses(&doubler());
        parses(&priority_queue(20, 1));
        parses(&leaf_tree(20, 1));
        parses(&map_reduce(7, 3));
    }

    #[test]
    fn priority_queue_expects_sorted_inserts() {
        let w = priority_queue(50, 9);
        let ints: Vec<i64> = w.expected.iter().map(|v| v.as_int()).collect();
        assert!(ints.windows(2).all(|p| p[0] <= p[1]));
        assert_eq!(ints.len(), 50);
        assert!(ints.iter().all(|&v| (1..1 << 31).contains(&v)));
    }

    #[test]
    fn map_reduce_oracle() {
        // Direct sums, independent of the closed form.
        for num in [1usize, 2, 4, 10, 1000] {
            let direct: i64 = (0..num as i64).map(|v| v * v).sum();
            assert_eq!(map_reduce(num, 2).expected, vec![Value::Int(direct); 2]);
        }
    }

    #[test]
    fn leaf_tree_probes_are_not_members() {
        let w = leaf_tree(100, 3);
        assert_eq!(w.expected.len(), 100 + LEAF_TREE_PROBES);
    }
}
