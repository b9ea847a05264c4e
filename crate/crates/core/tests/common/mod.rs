//! Shared fixtures: recorded reports for the published taxonomy examples and
//! seeded synthetic corpora for training tests.
#![allow(dead_code)]

use faultrank_core::dataset::RankerExample;
use faultrank_core::harness::{Candidate, ExecutionReport, Task, TestFormat, TestResult, TestStatus};
use faultrank_core::taxonomy::{
    count_lines, labels_for_report, ExecErrorClass, FaultLabelSet, IntentErrorClass,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

pub struct LabelCase {
    pub name: &'static str,
    pub code: &'static str,
    pub report: ExecutionReport,
    pub expected: FaultLabelSet,
}

pub fn exec_report(exception_type: &str, line: Option<i64>) -> ExecutionReport {
    let status = if exception_type == "TimeoutException" {
        TestStatus::Timeout
    } else {
        TestStatus::ExecError
    };
    ExecutionReport::from_results(
        "task",
        "cand",
        TestFormat::CallBased,
        vec![TestResult::fault(0, status, exception_type, None, line, json!(0))],
        0,
    )
}

pub fn intent_report(produced: Value, expected: Value) -> ExecutionReport {
    ExecutionReport::from_results(
        "task",
        "cand",
        TestFormat::CallBased,
        vec![TestResult::wrong_output(0, produced, expected)],
        0,
    )
}

fn exec_case(
    name: &'static str,
    code: &'static str,
    exception_type: &str,
    line: Option<i64>,
    class: ExecErrorClass,
    line_class: usize,
) -> LabelCase {
    LabelCase {
        name,
        code,
        report: exec_report(exception_type, line),
        expected: FaultLabelSet::execution(class, line_class),
    }
}

fn intent_case(name: &'static str, code: &'static str, produced: Value, expected: Value, class: IntentErrorClass) -> LabelCase {
    LabelCase {
        name,
        code,
        report: intent_report(produced, expected),
        expected: FaultLabelSet::intent(class),
    }
}

/// The two dataset rows shown with their full label vectors.
pub fn dataset_rows() -> Vec<LabelCase> {
    vec![
        exec_case(
            "number_property",
            "def number_property(n):\n  if n % 2:\n  return random.choice(n)\n",
            "TypeError",
            Some(2),
            ExecErrorClass::TypeError,
            2,
        ),
        intent_case(
            "gematria",
            "def gematria(string):\n return ''.join(sorted(string.lower(),\n   key=lambda item: item.lower(),\n   reverse=True)).lower()\n",
            json!("vole"),
            json!(775),
            IntentErrorClass::OutputTypeError,
        ),
    ]
}

/// Two examples per execution-error class, as recorded by the harness.
pub fn execution_examples() -> Vec<LabelCase> {
    use ExecErrorClass::*;
    vec![
        exec_case("bird_code", "def bird_code(arr):\n  if 'hyphen' in arr:\n    return [arr[i][0] + ...\n", "NameError", Some(2), NameError, 2),
        exec_case("args_to_string", "def args_to_string(args):\n return '\\n'.join(sorted(s,\n   key=lambda x: x.isdigit())) + '\\n'\n", "NameError", Some(2), NameError, 2),
        exec_case("unpack", "t=int(input())\nfor i in range(t):\n  s,g,d,t=map(int,input().split())\n  print(d-1)\n  print(s*g)\n", "ValueError", Some(2), ValueError, 2),
        exec_case("capitals_first", "def capitals_first(text):\n return '{:b}{}'.format(text.lower(),\n    text.upper(), text.capitalize())\n", "ValueError", Some(1), ValueError, 1),
        exec_case("double_input", "t = int(input())\nfor i in range(t):\n  s = input()\n  a = sum(map(int, input().split(' ')))\n  print(a)\n", "EOFError", Some(3), EOFError, 3),
        exec_case("question_marks", "_ = input()\ns = input()\nans = 1\nfor i in range(1, len(s)):\n  if s[i] == \"?\" and s[i - 1] == \"?\":\n  ans = (ans * 2)\n", "EOFError", Some(1), EOFError, 1),
        exec_case("solomons_quest", "def solomons_quest(arr):\n  return [abs(a) for a in arr]\n", "TypeError", Some(1), TypeError, 1),
        exec_case("negation_value", "def negation_value(s, val):\n  if val in s: return False\n  return s[0]\n", "TypeError", Some(1), TypeError, 1),
        exec_case("counter", "for _ in range(int(input())):\n  n,m=map(int,input().split())\n  l=[0]*n\n  for i in range(n*m):\n    l[i]+=1\n", "IndexError", Some(4), IndexError, 4),
        exec_case("get_last_digit", "def get_last_digit(index):\n  digits = [x for x in \\\n   range(1,index + 1) if x < 10]\n  return digits[index]\n", "IndexError", Some(3), IndexError, 3),
        exec_case("define_suit", "def define_suit(card):\n  a = {\"3C\": \"clubs\", \"3D\":\n  \"diamonds\", \"3H\": \"hearts\", \"3S\":\n  \"spades\"}\n  return a[card]\n", "KeyError", Some(4), KeyError, 4),
        exec_case("league_standings", "def league_standings(teams):\n  return {i+1: teams[-i-1] for\n    i in range(len(teams))}\n", "KeyError", Some(1), KeyError, 1),
        exec_case("seemingly", "def seemingly(string):\n  ...\n", "FunctionNotFound", None, FunctionNotFound, 1),
        exec_case("empty_code", "", "FunctionNotFound", None, FunctionNotFound, 1),
        exec_case("pre_fizz", "def pre_fizz(n):\n  list = []\n  while n >= 0:\n    list.append(n)\n    n = n//1\n  return list\n", "TimeoutException", None, TimeoutException, 1),
        exec_case("fibonacci", "def fibonacci(n):\n  return n if n in [0, 1] else\n  fibonacci(n - 1) +\n  fibonacci(n - 2)\n", "TimeoutException", None, TimeoutException, 1),
        exec_case("game_winners", "def game_winners(gryffindor,\nslytherin):\n  if slytherin == \"yes\":\n    return \"It's a draw!\".\n  ...\n", "SyntaxError", Some(3), SyntaxError, 3),
        exec_case("process_data", "def process_data(data):\n  return data[0] * data[1] *\n  data[2] for i in range(len(data))\n", "SyntaxError", Some(1), SyntaxError, 1),
        exec_case("duplicate_count", "def duplicate_count(text):\n  return sum(count for c, count in\n   text.items() for count in {'a', 'A', 'B'})\n", "AttributeError", Some(2), Misc, 2),
        exec_case("unbound", "for _ in range(int(input())):\n  n = int(input())\n  a = a+1\n  ...\n", "UnboundLocalError", Some(2), Misc, 2),
    ]
}

/// Two examples per intent-error class, with produced and expected values
/// as the harness records them.
pub fn intent_examples() -> Vec<LabelCase> {
    use IntentErrorClass::*;
    vec![
        intent_case("consecutive_sum", "def consecutive_sum(num):\n  sum = 0\n  n = len(str(num))\n  for i in range(n-1):\n    if num % 10:\n      return sum\n", Value::Null, json!(3), NoneError),
        intent_case("start_smoking", "def start_smoking(bars,boxes):\n  rem = boxes * 18 - bars * 10\n  if rem != 1:\n    print((rem + 4) // 5)\n  else:\n    print(0)\n", Value::Null, json!(4), NoneError),
        intent_case("grabscrab", "def grabscrab(word, possible_words):\n  if word in possible_words:\n    return possible_words[word]\n  else:\n    return []\n", json!([]), json!(["first"]), EmptyError),
        intent_case("interleave", "def interleave(args):\n  return [elem for elem in zip(args)\n    if len(elem) < len(args)]\n", json!([]), json!([1, "c", 2, "d", 3, "e"]), EmptyError),
        intent_case("diamonds_and_toads_count", "def diamonds_and_toads(sentence, fairy):\n  if fairy == 'good':\n    return sum(1 for i in sentence.split())\n  elif fairy == 'evil':\n    return sum(1 for i in sentence.split())\n", json!(3), json!([{"ruby": 3, "crystal": 2}]), OutputTypeError),
        intent_case("longest_prefix", "class Solution:\n  def longestPrefix(self, s: str) -> str:\n    s = list(s)\n    s = [i for i,j in zip(s,s[::-1][0:])]\n    return s[:-2]\n", json!(["\"", "l", "e", "v", "e"]), json!("\""), OutputTypeError),
        intent_case("rotate", "def rotate(arr, n):\n  return list(range(0,len(arr)+n,n))\n", json!([0, 1, 2, 3]), json!(["c", "a", "b"]), LengthError),
        intent_case("diamonds_and_toads_zip", "def diamonds_and_toads(sentence,fairy):\n  return dict(zip('Ruby Crystal',\n            (0, 2, 1, 2, 0)))\n", json!({"R": 0, "u": 2, "b": 1, "y": 2, " ": 0}), json!({"ruby": 3, "crystal": 2}), LengthError),
        intent_case("is_balanced", "def is_balanced(source, caps):\n  return all(x.startswith(caps) or x == caps\n    for x in source)\n", json!(false), json!(true), IntSmallError),
        intent_case("count_zeros", "T = int(input())\nfor _ in range(T):\n  N = int(input())\n  print(bin(N).count('0'))\n", json!([[2], [3]]), json!([[1], [2]]), IntSmallError),
        intent_case("missing_angle", "def missing_angle(h, a, o):\n  return int((a*h+o)/2) if o==0\n    else int(a*h+o)\n", json!(300), json!(37), IntLargeError),
        intent_case("find_median", "class Solution:\n  def findMedian(self, nums1, nums2):\n    nums1.sort()\n    nums2.sort()\n    return float('-inf')\n", json!({"$float": "-inf"}), json!(2.0), IntLargeError),
        intent_case("smash", "def smash(words):\n  return''.join(word for word in words)\n", json!("helloworld"), json!("hello world"), StringSmallError),
        intent_case("solve", "def solve(st):\n  a = st.find(\"a\")\n  return a if len(st) == 0\n    else \"\".join(sorted(list(st)))[0]\n", json!("a"), json!("x"), StringSmallError),
        intent_case("jumping_number", "def jumping_number(number):\n  number = str(number)\n  if len(number)!= 0:\n    return \"Not!!\"\n  else:\n    return \"Jumping!!\"\n", json!("Not!!"), json!("Jumping!!"), StringLargeError),
        intent_case("spacify", "def spacify(string):\n  #your code here\n  return ''.join(sorted(string.split()))\n", json!("Pippi"), json!("P i p p i"), StringLargeError),
    ]
}

/// The whole-program example whose stdout is compared line by line.
pub fn stdin_count_zeros() -> ExecutionReport {
    ExecutionReport::from_results(
        "task",
        "cand",
        TestFormat::StdinStdout,
        vec![TestResult::wrong_output(0, json!("2\n3\n"), json!("1\n2\n"))],
        0,
    )
}

// ---------------------------------------------------------------------------
// Synthetic corpora

const FILLER: &[&str] = &[
    "x = a + b",
    "y = x * 2",
    "total = sum(values)",
    "for v in values:",
    "if x > y:",
    "result.append(v)",
    "n = len(values)",
    "values.sort()",
    "acc = acc + v",
    "z = max(x, y)",
    "s = str(n)",
    "out = []",
    "i = i + 1",
    "k = n // 2",
    "w = min(values)",
    "count += 1",
];

/// Statements typical of wrong-output programs.
const INTENT_SIGNALS: &[&str] = &["return x - 1", "return str(total)", "return []", "return n + 1"];

/// Statements typical of crashing programs, with the exception they raise.
const EXEC_SIGNALS: &[(&str, &str)] = &[
    ("return undefined_total", "NameError"),
    ("z = values[n]", "IndexError"),
    ("k = int('k')", "ValueError"),
    ("w = len(n)", "TypeError"),
];

pub struct Corpus {
    pub tasks: Vec<Task>,
    pub candidates: Vec<Candidate>,
    pub reports: Vec<ExecutionReport>,
    pub examples: Vec<RankerExample>,
}

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Correct,
    Intent,
    Exec,
}

fn make_task(id: &str, rng: &mut ChaCha8Rng) -> Task {
    let topics = ["sum", "sort", "count", "digits", "pairs", "window", "prefix", "grid"];
    let prompt = format!(
        "Write a function solve that computes the {} of the {} values.",
        topics[rng.gen_range(0..topics.len())],
        topics[rng.gen_range(0..topics.len())]
    );
    Task {
        task_id: id.into(),
        prompt,
        test_format: TestFormat::CallBased,
        function_name: Some("solve".into()),
        inputs: vec![json!([[1, 2, 3]])],
        expected_outputs: vec![json!(6)],
        starter_code: None,
    }
}

fn body(rng: &mut ChaCha8Rng, lines: usize) -> Vec<String> {
    (0..lines)
        .map(|_| format!("    {}", FILLER[rng.gen_range(0..FILLER.len())]))
        .collect()
}

/// Ranking corpus whose fault kinds carry weak lexical cues: a fault-typical
/// statement appears in 60% of faulty programs and, as noise, in 15% of
/// correct ones. Per-task correct rates are drawn from [0.1, 0.5].
pub fn ranking_corpus(prefix: &str, tasks: usize, per_task: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut corpus = Corpus {
        tasks: Vec::new(),
        candidates: Vec::new(),
        reports: Vec::new(),
        examples: Vec::new(),
    };
    for t in 0..tasks {
        let task = make_task(&format!("{prefix}{t:03}"), &mut rng);
        let p_correct: f64 = rng.gen_range(0.1..0.5);
        for c in 0..per_task {
            let u: f64 = rng.gen();
            let kind = if u < p_correct {
                Kind::Correct
            } else if u < p_correct + (1.0 - p_correct) / 2.0 {
                Kind::Intent
            } else {
                Kind::Exec
            };
            let mut lines = vec!["def solve(values):".to_string()];
            let n = rng.gen_range(3..7);
            lines.extend(body(&mut rng, n));
            let signal = match kind {
                Kind::Correct => 0.15,
                _ => 0.6,
            };
            let mut exec_type = "RuntimeError";
            let mut fault_line = None;
            if rng.gen_bool(signal) {
                let at = rng.gen_range(1..=lines.len());
                let stmt = match kind {
                    Kind::Intent => INTENT_SIGNALS[rng.gen_range(0..INTENT_SIGNALS.len())].to_string(),
                    Kind::Exec => {
                        let (s, e) = EXEC_SIGNALS[rng.gen_range(0..EXEC_SIGNALS.len())];
                        exec_type = e;
                        s.to_string()
                    }
                    Kind::Correct => {
                        if rng.gen_bool(0.5) {
                            INTENT_SIGNALS[rng.gen_range(0..INTENT_SIGNALS.len())].to_string()
                        } else {
                            EXEC_SIGNALS[rng.gen_range(0..EXEC_SIGNALS.len())].0.to_string()
                        }
                    }
                };
                lines.insert(at, format!("    {stmt}"));
                fault_line = Some(at as i64 + 1);
            }
            lines.push("    return result".into());
            let code = lines.join("\n") + "\n";
            let candidate = Candidate {
                task_id: task.task_id.clone(),
                candidate_id: format!("c{c:02}"),
                code,
                gen_logprob: Some(-rng.gen_range(5.0..60.0)),
                source_model: Some("synthetic".into()),
            };
            let expected = task.expected_outputs[0].clone();
            let result = match kind {
                Kind::Correct => TestResult::pass(0, expected.clone(), expected),
                Kind::Intent => {
                    let produced = json!(6 + rng.gen_range(1..30));
                    TestResult::wrong_output(0, produced, expected)
                }
                Kind::Exec => TestResult::fault(
                    0,
                    TestStatus::ExecError,
                    exec_type,
                    None,
                    fault_line.or(Some(rng.gen_range(1..=count_lines(&candidate.code) as i64))),
                    expected,
                ),
            };
            let report = ExecutionReport::from_results(
                task.task_id.clone(),
                candidate.candidate_id.clone(),
                TestFormat::CallBased,
                vec![result],
                0,
            );
            corpus.push(&task, candidate, report);
        }
        corpus.tasks.push(task);
    }
    corpus
}

impl Corpus {
    fn push(&mut self, task: &Task, candidate: Candidate, report: ExecutionReport) {
        let labels = labels_for_report(&report, count_lines(&candidate.code));
        self.examples.push(RankerExample {
            task_id: task.task_id.clone(),
            candidate_id: candidate.candidate_id.clone(),
            prompt: task.prompt.clone(),
            code: candidate.code.clone(),
            labels,
            source_model: "synthetic".into(),
            gen_logprob: candidate.gen_logprob,
            report: None,
        });
        self.candidates.push(candidate);
        self.reports.push(report);
    }
}

pub const LINE_MARKER: &str = "explode_here()";

/// Line-head corpus: crashing programs carry a marker call on the faulty
/// line; other programs never contain it.
pub fn line_corpus(prefix: &str, tasks: usize, per_task: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut corpus = Corpus {
        tasks: Vec::new(),
        candidates: Vec::new(),
        reports: Vec::new(),
        examples: Vec::new(),
    };
    for t in 0..tasks {
        let task = make_task(&format!("{prefix}{t:03}"), &mut rng);
        for c in 0..per_task {
            let kind = *[Kind::Correct, Kind::Intent, Kind::Exec, Kind::Exec]
                .choose(&mut rng)
                .unwrap();
            let mut lines = vec!["def solve(values):".to_string()];
            let n = rng.gen_range(3..9);
            lines.extend(body(&mut rng, n));
            let mut fault_line = None;
            if kind == Kind::Exec {
                let at = rng.gen_range(1..=lines.len());
                lines.insert(at, format!("    {LINE_MARKER}"));
                fault_line = Some(at as i64 + 1);
            }
            let code = lines.join("\n") + "\n";
            let candidate = Candidate {
                task_id: task.task_id.clone(),
                candidate_id: format!("c{c:02}"),
                code,
                gen_logprob: None,
                source_model: None,
            };
            let expected = task.expected_outputs[0].clone();
            let result = match kind {
                Kind::Correct => TestResult::pass(0, expected.clone(), expected),
                Kind::Intent => TestResult::wrong_output(0, json!(99), expected),
                Kind::Exec => TestResult::fault(0, TestStatus::ExecError, "RuntimeError", None, fault_line, expected),
            };
            let report = ExecutionReport::from_results(
                task.task_id.clone(),
                candidate.candidate_id.clone(),
                TestFormat::CallBased,
                vec![result],
                0,
            );
            corpus.push(&task, candidate, report);
        }
        corpus.tasks.push(task);
    }
    corpus
}
