use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// One message-passing step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Step {
    /// Fine-graph update.
    H,
    /// Coarse-graph update.
    L,
    /// Fine to coarse transfer.
    D,
    /// Coarse to fine transfer.
    U,
}

impl Step {
    pub fn as_char(self) -> char {
        match self {
            Step::H => 'H',
            Step::L => 'L',
            Step::D => 'D',
            Step::U => 'U',
        }
    }
}

/// Expanded processor schedule, written `p=1H 11L 1H (U=1,D=1)`.
///
/// A `D` step is inserted at every H to L transition and a `U` step at every
/// L to H transition; the declared counts must match.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Schedule {
    steps: Vec<Step>,
    groups: Vec<(usize, Step)>,
}

impl Schedule {
    pub fn parse(text: &str) -> Result<Self> {
        let fail = |reason: &str| Error::Schedule {
            text: text.to_string(),
            reason: reason.to_string(),
        };
        let body = text.trim().strip_prefix("p=").ok_or_else(|| fail("expected leading \"p=\""))?;
        let open = body.find('(').ok_or_else(|| fail("missing \"(U=..,D=..)\" counts"))?;
        let (groups_text, counts_text) = body.split_at(open);
        let counts_text = counts_text
            .trim_end()
            .strip_prefix('(')
            .and_then(|c| c.strip_suffix(')'))
            .ok_or_else(|| fail("counts must be enclosed in parentheses at the end"))?;

        let mut groups: Vec<(usize, Step)> = Vec::new();
        let mut digits = String::new();
        for c in groups_text.chars() {
            match c {
                '0'..='9' => digits.push(c),
                'H' | 'L' => {
                    let n: usize = digits.parse().map_err(|_| fail("every H/L needs a repeat count"))?;
                    if n == 0 {
                        return Err(fail("repeat counts must be positive"));
                    }
                    let step = if c == 'H' { Step::H } else { Step::L };
                    match groups.last_mut() {
                        Some((m, s)) if *s == step => *m += n,
                        _ => groups.push((n, step)),
                    }
                    digits.clear();
                }
                c if c.is_whitespace() && digits.is_empty() => {}
                _ => return Err(fail(&format!("unexpected character {c:?}"))),
            }
        }
        if !digits.is_empty() {
            return Err(fail("trailing count without H or L"));
        }
        if groups.first().map(|g| g.1) != Some(Step::H) || groups.last().map(|g| g.1) != Some(Step::H) {
            return Err(fail("schedule must begin and end with H"));
        }

        let (mut u, mut d) = (None, None);
        for item in counts_text.split(',') {
            let (key, value) = item.split_once('=').ok_or_else(|| fail("counts must read U=<int>,D=<int>"))?;
            let value: usize = value.trim().parse().map_err(|_| fail("counts must be integers"))?;
            let slot = match key.trim() {
                "U" => &mut u,
                "D" => &mut d,
                _ => return Err(fail("counts must read U=<int>,D=<int>")),
            };
            if slot.replace(value).is_some() {
                return Err(fail("duplicate count"));
            }
        }
        let (Some(u), Some(d)) = (u, d) else {
            return Err(fail("both U and D counts are required"));
        };

        let mut steps = Vec::new();
        let mut prev = Step::H;
        for &(n, step) in &groups {
            match (prev, step) {
                (Step::H, Step::L) => steps.push(Step::D),
                (Step::L, Step::H) => steps.push(Step::U),
                _ => {}
            }
            steps.extend(std::iter::repeat_n(step, n));
            prev = step;
        }
        let sched = Schedule { steps, groups };
        if sched.count(Step::U) != u || sched.count(Step::D) != d {
            return Err(fail(&format!(
                "declared U={u}, D={d} but the transitions imply U={}, D={}",
                sched.count(Step::U),
                sched.count(Step::D)
            )));
        }
        Ok(sched)
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    /// Number of message-passing steps; every H, L, D and U counts once.
    pub fn total_mps(&self) -> usize {
        self.steps.len()
    }

    pub fn count(&self, step: Step) -> usize {
        self.steps.iter().filter(|&&s| s == step).count()
    }

    /// True if any step touches the coarse level.
    pub fn uses_coarse(&self) -> bool {
        self.count(Step::L) > 0
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p=")?;
        for (k, (n, s)) in self.groups.iter().enumerate() {
            if k > 0 {
                write!(f, " ")?;
            }
            write!(f, "{n}{}", s.as_char())?;
        }
        write!(f, " (U={},D={})", self.count(Step::U), self.count(Step::D))
    }
}

impl FromStr for Schedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Schedule::parse(s)
    }
}
