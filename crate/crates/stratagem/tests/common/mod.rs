//! Shared fixture: a small addition task plus a scripted model that covers
//! the whole pipeline, every inference method, and every baseline.
//!
//! Script rules key on content alone (a fragment of the strategy text or a
//! template instruction, plus the question), so replies are stable no
//! matter how calls interleave across workers.

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Output;

use stratagem::corpus::{Example, Split};
use stratagem::gateway::scripted::{ScriptFile, ScriptRule};
use stratagem::gateway::Role;
use tempfile::TempDir;

pub const MODEL_ID: &str = "test-model";
pub const TASK_NAME: &str = "toy_addition";

/// (id, question, expression, gold answer)
pub const SEED: [(&str, &str, &str, &str); 4] = [
    ("e1", "What is 2 + 3?", "2 + 3", "5"),
    ("e2", "What is 10 + 5?", "10 + 5", "15"),
    ("e3", "What is 7 + 8?", "7 + 8", "15"),
    ("e4", "What is 1 + 9?", "1 + 9", "10"),
];

pub const VALIDATION: [(&str, &str, &str, &str); 10] = [
    ("v1", "What is 1 + 1?", "1 + 1", "2"),
    ("v2", "What is 2 + 2?", "2 + 2", "4"),
    ("v3", "What is 3 + 3?", "3 + 3", "6"),
    ("v4", "What is 4 + 4?", "4 + 4", "8"),
    ("v5", "What is 5 + 5?", "5 + 5", "10"),
    ("v6", "What is 6 + 4?", "6 + 4", "10"),
    ("v7", "What is 9 + 9?", "9 + 9", "18"),
    ("v8", "What is 8 + 3?", "8 + 3", "11"),
    ("v9", "What is 7 + 6?", "7 + 6", "13"),
    ("v10", "What is 2 + 9?", "2 + 9", "11"),
];

/// (id, question, expression, gold answer, difficulty)
pub const TEST: [(&str, &str, &str, &str, u8); 4] = [
    ("t1", "What is 3 + 4?", "3 + 4", "7", 1),
    ("t2", "What is 6 + 6?", "6 + 6", "12", 2),
    ("t3", "What is 9 + 2?", "9 + 2", "11", 3),
    ("t4", "What is 5 + 8?", "5 + 8", "13", 4),
];

/// One scripted strategy: its unique matching fragment and the answers the
/// scripted executor produces on the seed split.
pub struct ScriptedStrategy {
    pub id: &'static str,
    pub fragment: &'static str,
    pub text: &'static str,
    pub seed_answers: [&'static str; 4],
}

pub const S1: ScriptedStrategy = ScriptedStrategy {
    id: "s1",
    fragment: "Add the numbers together",
    text: "1. Identify the two numbers in the question.\n2. Add the numbers together.\n3. Report the sum as the answer.",
    seed_answers: ["5", "15", "15", "10"],
};
pub const S2: ScriptedStrategy = ScriptedStrategy {
    id: "s2",
    fragment: "Compute the sum step by step",
    text: "1. Read the question.\n2. Compute the sum step by step.\n3. State the result.",
    seed_answers: ["5", "15", "14", "10"],
};
pub const S3: ScriptedStrategy = ScriptedStrategy {
    id: "s3",
    fragment: "Stop after the second number of steps",
    text: "1. Read the question.\n2. Stop after the second number of steps.\n3. Report what you have.",
    seed_answers: ["5", "15", "7", "1"],
};
pub const S4: ScriptedStrategy = ScriptedStrategy {
    id: "s4",
    fragment: "Subtract the second number",
    text: "1. Read the question.\n2. Subtract the second number from the first.\n3. Report the result.",
    seed_answers: ["5", "5", "-1", "-8"],
};
pub const S5: ScriptedStrategy = ScriptedStrategy {
    id: "s5",
    fragment: "Multiply the two numbers",
    text: "1. Read the question.\n2. Multiply the two numbers.\n3. Report the product.",
    seed_answers: ["6", "50", "56", "9"],
};
pub const S3O2: ScriptedStrategy = ScriptedStrategy {
    id: "s3o2",
    fragment: "Take exactly as many steps",
    text: "1. Read the question.\n2. Take exactly as many steps as the addition needs.\n3. Report the sum.",
    seed_answers: ["5", "15", "15", "11"],
};
pub const S4O2: ScriptedStrategy = ScriptedStrategy {
    id: "s4o2",
    fragment: "instead of subtracting",
    text: "1. Read the question.\n2. Add the two numbers instead of subtracting.\n3. Report the result.",
    seed_answers: ["5", "15", "0", "2"],
};
pub const S5O2: ScriptedStrategy = ScriptedStrategy {
    id: "s5o2",
    fragment: "instead of multiplying",
    text: "1. Read the question.\n2. Add the two numbers instead of multiplying.\n3. Report the result.",
    seed_answers: ["5", "8", "9", "4"],
};

pub const ALL_STRATEGIES: [&ScriptedStrategy; 8] =
    [&S1, &S2, &S3, &S4, &S5, &S3O2, &S4O2, &S5O2];

/// Validation answers per ranked strategy, in validation order.
pub const EVAL_S1: [&str; 10] = ["2", "4", "6", "8", "10", "10", "19", "11", "13", "11"];
pub const EVAL_S2: [&str; 10] = ["2", "5", "6", "8", "11", "10", "18", "11", "12", "11"];
pub const EVAL_S3O2: [&str; 10] = ["2", "4", "6", "9", "10", "10", "18", "12", "13", "11"];

/// Test answers per top strategy, in test order.
pub const INFER_S1: [&str; 4] = ["7", "12", "11", "12"];
pub const INFER_S3O2: [&str; 4] = ["7", "12", "10", "13"];
pub const INFER_S2: [&str; 4] = ["6", "12", "11", "13"];

/// Candidate order the pipeline must settle on: vacc 0.9, 0.8, 0.7.
pub const FINAL_ORDER: [&str; 3] = ["s1", "s3o2", "s2"];

/// Expected test accuracy per inference method on this fixture.
pub const METHOD_ACCURACY: [(&str, f64); 9] = [
    ("single", 0.75),
    ("sc", 1.0),
    ("zs", 1.0),
    ("inconsistent", 0.75),
    ("sp", 0.5),
    ("cot", 0.75),
    ("cot-sc", 1.0),
    ("solutionllm", 0.75),
    ("cot-strategy", 0.75),
];

const COT_FRAG: &str = "add 3 ones to reach";
const SOL_FRAG: &str = "Write out the addition";

pub const COT_ASSET: &str = "Question: What is 4 + 3?\nSolution: Start at 4 and add 3 ones to reach 7.\nAnswer: The answer is 7\n\nQuestion: What is 2 + 6?\nSolution: Start at 2 and add 6 ones to reach 8.\nAnswer: The answer is 8\n";

fn rule(role: Role, contains: &[&str], response: String) -> ScriptRule {
    ScriptRule {
        role: Some(role),
        contains: contains.iter().map(|s| s.to_string()).collect(),
        temperature: None,
        sample_index: None,
        response,
    }
}

fn sectioned_reply(question: &str, solution: &str, answer: &str) -> String {
    format!("Question: {question}\nSolution: {solution}\nAnswer: The answer is {answer}.")
}

/// Builds the whole script. Rule order matters only where constraints
/// overlap: specific instruction fragments come before the catch-all
/// question-only rules at the end of each role's block.
pub fn build_script() -> ScriptFile {
    let mut rules = Vec::new();

    // Generation: six samples at temperature 1.0, the last repeating the
    // first text so deduplication is exercised.
    let generated = [&S1, &S2, &S3, &S4, &S5, &S1];
    for (index, strategy) in generated.iter().enumerate() {
        rules.push(ScriptRule {
            role: Some(Role::Generator),
            temperature: Some(1.0),
            sample_index: Some(index as u32),
            response: strategy.text.to_string(),
            ..Default::default()
        });
    }

    // Execution: every strategy that can ever run, over every seed example.
    for strategy in ALL_STRATEGIES {
        for ((_, question, expr, _), answer) in SEED.iter().zip(strategy.seed_answers) {
            rules.push(rule(
                Role::Executor,
                &[strategy.fragment, question],
                sectioned_reply(question, &format!("{expr} = {answer}."), answer),
            ));
        }
    }

    // Optimization: analysis then modification for the three strategies
    // that miss the threshold in iteration 1.
    let optimized: [(&ScriptedStrategy, &ScriptedStrategy, &str); 3] = [
        (&S3, &S3O2, "The strategy halts before the addition is finished, so the remaining amount is dropped."),
        (&S4, &S4O2, "Subtraction is the wrong operation for an addition question."),
        (&S5, &S5O2, "Multiplication is the wrong operation for an addition question."),
    ];
    for (parent, child, analysis) in optimized {
        rules.push(rule(
            Role::Optimizer,
            &["carefully analyze why", parent.fragment],
            analysis.to_string(),
        ));
        rules.push(rule(
            Role::Optimizer,
            &["modify the original strategy based on the feedback", parent.fragment],
            child.text.to_string(),
        ));
    }

    // Evaluation: the three ranked candidates over the validation split.
    let evaluated: [(&ScriptedStrategy, [&str; 10]); 3] =
        [(&S1, EVAL_S1), (&S2, EVAL_S2), (&S3O2, EVAL_S3O2)];
    for (strategy, answers) in evaluated {
        for ((_, question, expr, _), answer) in VALIDATION.iter().zip(answers) {
            rules.push(rule(
                Role::Evaluator,
                &[strategy.fragment, question],
                format!("{expr} = {answer}. The answer is {answer}."),
            ));
        }
    }

    // Inference with a single strategy prompt: top three candidates over
    // the test split.
    let inferred: [(&ScriptedStrategy, [&str; 4]); 3] =
        [(&S1, INFER_S1), (&S3O2, INFER_S3O2), (&S2, INFER_S2)];
    for (strategy, answers) in inferred {
        for ((_, question, expr, _, _), answer) in TEST.iter().zip(answers) {
            rules.push(rule(
                Role::Inference,
                &[strategy.fragment, question],
                format!("{expr} = {answer}. The answer is {answer}."),
            ));
        }
    }

    // Aggregation replies; the last one is malformed on purpose so the
    // majority-vote fallback path runs.
    rules.push(rule(
        Role::Inference,
        &["Candidate Solutions:", TEST[0].1],
        "Final Answer: The final answer is 7.".to_string(),
    ));
    rules.push(rule(
        Role::Inference,
        &["Candidate Solutions:", TEST[1].1],
        "All candidates agree. The final answer is 12.".to_string(),
    ));
    rules.push(rule(
        Role::Inference,
        &["Candidate Solutions:", TEST[2].1],
        "Most candidates compute 11. The final answer is 11.".to_string(),
    ));
    rules.push(rule(
        Role::Inference,
        &["Candidate Solutions:", TEST[3].1],
        "The candidates disagree and no single answer stands out.".to_string(),
    ));

    // Catch-all inference rules serve the mixed-shot prompt, which carries
    // no strategy text. Must stay after every strategy-specific rule.
    for ((_, question, expr, _, _), answer) in TEST.iter().zip(["7", "12", "11", "12"]) {
        rules.push(rule(
            Role::Inference,
            &[question],
            format!("Following the worked examples: {expr} = {answer}. The answer is {answer}."),
        ));
    }

    // Model-written shot construction: one correct solution per seed
    // example on the first try.
    for (_, question, expr, gold) in SEED {
        rules.push(rule(
            Role::Baseline,
            &["Please write a solution", question],
            sectioned_reply(question, &format!("{SOL_FRAG} {expr} = {gold}."), gold),
        ));
    }

    // Sampled chain-of-thought: three draws at 0.7 per test question.
    let cot_sc_answers: [[&str; 3]; 4] =
        [["7", "7", "6"], ["12", "12", "12"], ["11", "10", "11"], ["13", "12", "13"]];
    for ((_, question, expr, _, _), answers) in TEST.iter().zip(cot_sc_answers) {
        for (index, answer) in answers.iter().enumerate() {
            rules.push(ScriptRule {
                role: Some(Role::Baseline),
                contains: vec![COT_FRAG.to_string(), question.to_string()],
                temperature: Some(0.7),
                sample_index: Some(index as u32),
                response: format!(
                    "Count up from the first number. {expr} = {answer}. The answer is {answer}."
                ),
                ..Default::default()
            });
        }
    }

    // Strategy-development baseline. Its prompt embeds the worked prompt,
    // so these rules must come before the plain worked-prompt rules.
    for ((_, question, expr, _, _), answer) in TEST.iter().zip(["7", "12", "11", "12"]) {
        rules.push(rule(
            Role::Baseline,
            &["develop a general strategy", question],
            format!(
                "Strategy: 1. Find the two numbers. 2. Add them one by one.\nQuestion: {question}\nSolution: {expr} = {answer}.\nAnswer: The answer is {answer}."
            ),
        ));
    }

    // Greedy worked-prompt replies.
    for ((_, question, expr, _, _), answer) in TEST.iter().zip(["7", "12", "9", "13"]) {
        rules.push(ScriptRule {
            role: Some(Role::Baseline),
            contains: vec![COT_FRAG.to_string(), question.to_string()],
            temperature: Some(0.0),
            response: format!(
                "Start at the first number and count. {expr} = {answer}. The answer is {answer}."
            ),
            ..Default::default()
        });
    }

    // Model-written prompt at test time: its shots carry the marker text.
    for ((_, question, expr, _, _), answer) in TEST.iter().zip(["7", "12", "2", "13"]) {
        rules.push(rule(
            Role::Baseline,
            &[SOL_FRAG, question],
            format!("{SOL_FRAG} {expr} = {answer}. The answer is {answer}."),
        ));
    }

    // Catch-all baseline rules serve the bare question-answer prompt.
    for ((_, question, _, _, _), answer) in TEST.iter().zip(["7", "13", "9", "13"]) {
        rules.push(rule(Role::Baseline, &[question], format!("The answer is {answer}")));
    }

    ScriptFile {
        rules,
        queues: Default::default(),
    }
}

fn example(id: &str, question: &str, answer: &str, difficulty: Option<u8>, split: Split) -> Example {
    Example {
        id: id.to_string(),
        question: question.to_string(),
        answer: answer.to_string(),
        difficulty,
        split,
    }
}

pub fn dataset() -> Vec<Example> {
    let mut examples = Vec::new();
    for (id, question, _, answer) in SEED {
        examples.push(example(id, question, answer, None, Split::Seed));
    }
    for (id, question, _, answer) in VALIDATION {
        examples.push(example(id, question, answer, None, Split::Validation));
    }
    for (id, question, _, answer, difficulty) in TEST {
        examples.push(example(id, question, answer, Some(difficulty), Split::Test));
    }
    examples
}

/// Writes task, dataset, script, manifest, prices, and baseline assets
/// under `root`.
pub fn write_fixture(root: &Path) {
    let dataset_lines: String = dataset()
        .iter()
        .map(|e| serde_json::to_string(e).unwrap() + "\n")
        .collect();
    fs::write(root.join("data.jsonl"), dataset_lines).unwrap();

    let task = serde_json::json!({
        "name": TASK_NAME,
        "definition": "Given an addition question, compute the sum of the two integers.",
        "answer_kind": "number",
        "dataset": "data.jsonl",
    });
    fs::write(
        root.join("task.json"),
        serde_json::to_string_pretty(&task).unwrap(),
    )
    .unwrap();

    fs::write(
        root.join("script.json"),
        serde_json::to_string_pretty(&build_script()).unwrap(),
    )
    .unwrap();

    let prices = serde_json::json!({
        MODEL_ID: {"input_per_million": 1.0, "output_per_million": 2.0},
    });
    fs::write(
        root.join("prices.json"),
        serde_json::to_string_pretty(&prices).unwrap(),
    )
    .unwrap();

    let manifest = serde_json::json!({
        "task": "task.json",
        "pipeline": {"n": 6, "k": 3, "threshold": 0.75, "max_iterations": 3},
        "backend": {"kind": "scripted", "model_id": MODEL_ID, "script": "script.json"},
        "baseline_assets": "assets",
        "prices": "prices.json",
        "workers": 1,
        "seed": 0,
    });
    fs::write(
        root.join("run.json"),
        serde_json::to_string_pretty(&manifest).unwrap(),
    )
    .unwrap();

    let asset_dir = root.join("assets").join(TASK_NAME);
    fs::create_dir_all(&asset_dir).unwrap();
    fs::write(asset_dir.join("cot.txt"), COT_ASSET).unwrap();
}

pub struct Fixture {
    pub dir: TempDir,
}

impl Fixture {
    pub fn new() -> Fixture {
        let dir = tempfile::tempdir().unwrap();
        write_fixture(dir.path());
        Fixture { dir }
    }

    pub fn root(&self) -> &Path {
        self.dir.path()
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root().join("run.json")
    }

    pub fn task_path(&self) -> PathBuf {
        self.root().join("task.json")
    }

    pub fn script_path(&self) -> PathBuf {
        self.root().join("script.json")
    }

    pub fn run_dir(&self, name: &str) -> PathBuf {
        self.root().join(name)
    }
}

/// Runs the compiled binary with `args` and returns its output.
pub fn run_cli(args: &[&str]) -> Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_stratagem"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn stdout_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).to_string()
}

pub fn stderr_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).to_string()
}
