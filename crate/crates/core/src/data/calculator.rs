//! Template-generated arithmetic questions that reward calling the interpreter.
//!
//! Answers follow Python double-precision semantics for each template and are
//! printed with six decimals, rounded half away from zero.

use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;

use super::{QAItem, QuestionType};
use crate::tools::pyeval::py_float_repr;

pub const DATASET: &str = "calculator";

/// A literal as it appears in the question text: an int or a float.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Num {
    Int(i128),
    Float(f64),
}

impl Num {
    pub fn parse(s: &str) -> Option<Num> {
        if s.contains(['.', 'e', 'E']) {
            s.parse().ok().map(Num::Float)
        } else {
            s.parse().ok().map(Num::Int)
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Num::Int(i) => i as f64,
            Num::Float(f) => f,
        }
    }

    pub fn literal(self) -> String {
        match self {
            Num::Int(i) => i.to_string(),
            Num::Float(f) => py_float_repr(f),
        }
    }

    fn add(self, o: Num) -> Num {
        match (self, o) {
            (Num::Int(a), Num::Int(b)) => Num::Int(a + b),
            _ => Num::Float(self.as_f64() + o.as_f64()),
        }
    }

    fn sub(self, o: Num) -> Num {
        match (self, o) {
            (Num::Int(a), Num::Int(b)) => Num::Int(a - b),
            _ => Num::Float(self.as_f64() - o.as_f64()),
        }
    }

    fn mul(self, o: Num) -> Num {
        match (self, o) {
            (Num::Int(a), Num::Int(b)) => Num::Int(a * b),
            _ => Num::Float(self.as_f64() * o.as_f64()),
        }
    }

    fn div(self, o: Num) -> Num {
        Num::Float(self.as_f64() / o.as_f64())
    }

    fn abs(self) -> Num {
        match self {
            Num::Int(a) => Num::Int(a.abs()),
            Num::Float(f) => Num::Float(f.abs()),
        }
    }
}

/// Decimal text of `x` with six fractional digits, halves rounded away from zero.
pub fn round6(x: f64) -> String {
    // 1100 places is enough for the exact expansion of any finite f64.
    let exact = format!("{:.1100}", x.abs());
    let (int_part, frac) = exact.split_once('.').expect("fixed notation");
    let mut digits: Vec<u8> = int_part.bytes().chain(frac.bytes().take(6)).map(|b| b - b'0').collect();
    if frac.as_bytes()[6] >= b'5' {
        let mut i = digits.len();
        loop {
            if i == 0 {
                digits.insert(0, 1);
                break;
            }
            i -= 1;
            if digits[i] == 9 {
                digits[i] = 0;
            } else {
                digits[i] += 1;
                break;
            }
        }
    }
    let split = digits.len() - 6;
    let text: String = digits.iter().map(|d| char::from(b'0' + d)).collect();
    let negative = x.is_sign_negative() && digits.iter().any(|&d| d != 0);
    format!("{}{}.{}", if negative { "-" } else { "" }, &text[..split], &text[split..])
}

fn format_answer(n: Num) -> String {
    match n {
        Num::Int(i) => format!("{i}.000000"),
        Num::Float(f) => round6(f),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Template {
    DivPlusTimes,
    TimesMinus,
    DivPlus,
    Plus,
    Euclid2,
    Euclid3,
    Manhattan,
    Square,
    Sine,
    Sum,
}

impl Template {
    pub const ALL: [Template; 10] = [
        Template::DivPlusTimes,
        Template::TimesMinus,
        Template::DivPlus,
        Template::Plus,
        Template::Euclid2,
        Template::Euclid3,
        Template::Manhattan,
        Template::Square,
        Template::Sine,
        Template::Sum,
    ];
}

/// A parsed calculator question.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub template: Template,
    pub args: Vec<Num>,
}

fn lits(args: &[Num]) -> Vec<String> {
    args.iter().map(|a| a.literal()).collect()
}

impl Problem {
    pub fn question(&self) -> String {
        let a = lits(&self.args);
        match self.template {
            Template::DivPlusTimes => format!("What is {} divided by {} plus {} times {}?", a[0], a[1], a[2], a[3]),
            Template::TimesMinus => format!("What is {} * {} - {}?", a[0], a[1], a[2]),
            Template::DivPlus => format!("What is {} / {} + {}?", a[0], a[1], a[2]),
            Template::Plus => format!("How much is {} plus {}?", a[0], a[1]),
            Template::Euclid2 => {
                format!("What is the Euclidean distance between points ({}, {}) and ({}, {})?", a[0], a[1], a[2], a[3])
            }
            Template::Euclid3 => format!(
                "What is the 3D Euclidean distance between ({}, {}, {}) and ({}, {}, {})?",
                a[0], a[1], a[2], a[3], a[4], a[5]
            ),
            Template::Manhattan => {
                format!("What is the Manhattan distance between points ({}, {}) and ({}, {})?", a[0], a[1], a[2], a[3])
            }
            Template::Square => format!("What is the square of {}?", a[0]),
            Template::Sine => format!("What is the sine of {} radians?", a[0]),
            Template::Sum => {
                let (last, head) = a.split_last().expect("at least two terms");
                format!("What's the sum of {} and {}?", head.join(", "), last)
            }
        }
    }

    /// Python program printing the answer.
    pub fn program(&self) -> String {
        let a = lits(&self.args);
        match self.template {
            Template::DivPlusTimes => format!("print({} / {} + {} * {})", a[0], a[1], a[2], a[3]),
            Template::TimesMinus => format!("print({} * {} - {})", a[0], a[1], a[2]),
            Template::DivPlus => format!("print({} / {} + {})", a[0], a[1], a[2]),
            Template::Plus => format!("print({} + {})", a[0], a[1]),
            Template::Euclid2 => {
                format!("import math\nprint(math.sqrt(({} - {})**2 + ({} - {})**2))", a[2], a[0], a[3], a[1])
            }
            Template::Euclid3 => format!(
                "import math\nprint(math.sqrt(({} - {})**2 + ({} - {})**2 + ({} - {})**2))",
                a[3], a[0], a[4], a[1], a[5], a[2]
            ),
            Template::Manhattan => format!("print(abs({} - {}) + abs({} - {}))", a[0], a[2], a[1], a[3]),
            Template::Square => format!("print(({}) ** 2)", a[0]),
            Template::Sine => format!("import math\nprint(math.sin({}))", a[0]),
            Template::Sum => format!("print(sum([{}]))", a.join(", ")),
        }
    }

    /// Value under Python semantics, evaluated in the program's order.
    pub fn value(&self) -> Num {
        let a = &self.args;
        let sq = |x: Num| x.mul(x);
        match self.template {
            Template::DivPlusTimes => a[0].div(a[1]).add(a[2].mul(a[3])),
            Template::TimesMinus => a[0].mul(a[1]).sub(a[2]),
            Template::DivPlus => a[0].div(a[1]).add(a[2]),
            Template::Plus => a[0].add(a[1]),
            Template::Euclid2 => {
                let s = sq(a[2].sub(a[0])).add(sq(a[3].sub(a[1])));
                Num::Float(s.as_f64().sqrt())
            }
            Template::Euclid3 => {
                let s = sq(a[3].sub(a[0])).add(sq(a[4].sub(a[1]))).add(sq(a[5].sub(a[2])));
                Num::Float(s.as_f64().sqrt())
            }
            Template::Manhattan => a[0].sub(a[2]).abs().add(a[1].sub(a[3]).abs()),
            Template::Square => match a[0] {
                Num::Int(i) => Num::Int(i * i),
                Num::Float(f) => Num::Float(f.powi(2)),
            },
            Template::Sine => Num::Float(a[0].as_f64().sin()),
            Template::Sum => a.iter().fold(Num::Int(0), |acc, &x| acc.add(x)),
        }
    }

    pub fn answer(&self) -> String {
        format_answer(self.value())
    }
}

const NUM: &str = r"(-?\d+(?:\.\d+)?(?:e[+-]\d+)?)";

fn patterns() -> &'static [(Template, Regex)] {
    static CELL: OnceLock<Vec<(Template, Regex)>> = OnceLock::new();
    CELL.get_or_init(|| {
        let n = NUM;
        let raw = [
            (Template::DivPlusTimes, format!(r"^What is {n} divided by {n} plus {n} times {n}\?$")),
            (Template::TimesMinus, format!(r"^What is {n} \* {n} - {n}\?$")),
            (Template::DivPlus, format!(r"^What is {n} / {n} \+ {n}\?$")),
            (Template::Plus, format!(r"^How much is {n} plus {n}\?$")),
            (
                Template::Euclid2,
                format!(r"^What is the Euclidean distance between points \({n}, {n}\) and \({n}, {n}\)\?$"),
            ),
            (
                Template::Euclid3,
                format!(r"^What is the 3D Euclidean distance between \({n}, {n}, {n}\) and \({n}, {n}, {n}\)\?$"),
            ),
            (
                Template::Manhattan,
                format!(r"^What is the Manhattan distance between points \({n}, {n}\) and \({n}, {n}\)\?$"),
            ),
            (Template::Square, format!(r"^What is the square of {n}\?$")),
            (Template::Sine, format!(r"^What is the sine of {n} radians\?$")),
            (Template::Sum, r"^What's the sum of (.+) and ([^ ]+)\?$".to_string()),
        ];
        raw.into_iter().map(|(t, p)| (t, Regex::new(&p).expect("static pattern"))).collect()
    })
}

/// Recovers the template and operands from a generated question.
pub fn parse_question(question: &str) -> Option<Problem> {
    for (template, re) in patterns() {
        let Some(caps) = re.captures(question.trim()) else { continue };
        let texts: Vec<&str> = if *template == Template::Sum {
            let mut v: Vec<&str> = caps[1].split(", ").collect();
            v.push(caps.get(2)?.as_str());
            v
        } else {
            caps.iter().skip(1).map(|m| m.map(|m| m.as_str())).collect::<Option<Vec<_>>>()?
        };
        let args = texts.into_iter().map(Num::parse).collect::<Option<Vec<_>>>()?;
        return Some(Problem { template: *template, args });
    }
    None
}

/// Program answering a generated question, if it is one.
pub fn program_for(question: &str) -> Option<String> {
    parse_question(question).map(|p| p.program())
}

fn big_int(rng: &mut ChaCha8Rng) -> Num {
    Num::Int(rng.gen_range(-99_999_999i128..=99_999_999))
}

fn big_float(rng: &mut ChaCha8Rng) -> Num {
    Num::Float(rng.gen_range(-1e8..1e8))
}

fn operand(rng: &mut ChaCha8Rng) -> Num {
    if rng.gen_bool(0.5) {
        big_int(rng)
    } else {
        big_float(rng)
    }
}

/// Small coordinate: an int or a one-decimal float.
fn coord(rng: &mut ChaCha8Rng) -> Num {
    let v = rng.gen_range(-999i128..=999);
    if rng.gen_bool(0.5) {
        Num::Int(v)
    } else {
        Num::Float((v * 10 + rng.gen_range(1i128..=9)) as f64 / 10.0)
    }
}

fn nonzero_divisor(rng: &mut ChaCha8Rng) -> Num {
    if rng.gen_bool(0.5) {
        let mut d = rng.gen_range(-99i128..=99);
        if d == 0 {
            d = 7;
        }
        Num::Int(d)
    } else {
        operand(rng)
    }
}

fn draw(template: Template, rng: &mut ChaCha8Rng) -> Problem {
    let args = match template {
        Template::DivPlusTimes => vec![operand(rng), nonzero_divisor(rng), big_float(rng), big_float(rng)],
        Template::TimesMinus => vec![big_float(rng), big_int(rng), big_int(rng)],
        Template::DivPlus => vec![big_float(rng), nonzero_divisor(rng), big_float(rng)],
        Template::Plus => vec![operand(rng), operand(rng)],
        Template::Euclid2 => (0..4).map(|_| coord(rng)).collect(),
        Template::Euclid3 => (0..6).map(|_| coord(rng)).collect(),
        Template::Manhattan => vec![operand(rng), operand(rng), coord(rng), coord(rng)],
        Template::Square => vec![Num::Float(rng.gen_range(-100.0..100.0))],
        Template::Sine => vec![Num::Float(rng.gen_range(1e6..1e8))],
        Template::Sum => {
            let k = rng.gen_range(2..=5);
            (0..k).map(|_| operand(rng)).collect()
        }
    };
    Problem { template, args }
}

/// `n` questions drawn uniformly over the templates.
pub fn gen_calculator(n: usize, seed: u64) -> Vec<QAItem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let template = *Template::ALL.choose(&mut rng).expect("templates");
            let p = draw(template, &mut rng);
            QAItem::new(format!("calc-{i:05}"), p.question(), p.answer(), QuestionType::MathAbsTol, DATASET)
        })
        .collect()
}
