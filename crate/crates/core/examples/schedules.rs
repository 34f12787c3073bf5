//! Parses processor schedules and prints their expanded step sequence.
//!
//! cargo run --example schedules -- "p=2H 4L 2H (U=1,D=1)"

use msmgn::processor::{Schedule, Step};

fn main() {
    let mut texts: Vec<String> = std::env::args().skip(1).collect();
    if texts.is_empty() {
        texts = ["p=15H (U=0,D=0)", "p=1H 11L 1H (U=1,D=1)", "p=3H 6L 3H 6L 3H (U=2, D=2)", "p=1H 5L"]
            .map(String::from)
            .to_vec();
    }
    for t in &texts {
        match Schedule::parse(t) {
            Ok(s) => {
                let seq: String = s.steps().iter().map(|st| st.as_char()).collect();
                let [h, l, d, u] = [Step::H, Step::L, Step::D, Step::U].map(|k| s.count(k));
                println!("{s}: {} mps (H {h}, L {l}, D {d}, U {u}) {seq}", s.total_mps());
            }
            Err(e) => println!("{t}: {e}"),
        }
    }
}
