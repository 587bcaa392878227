//! Fixture benchmark and a deterministic scripted model shared by the
//! integration tests and the fixture recorder.
#![allow(dead_code)]

pub mod faults;
pub mod flipped;
pub mod oracles;

use std::path::PathBuf;

use regex::Regex;
use snipadapt_core::conversation::{Role, Turn};
use snipadapt_core::dataset::{derive_all, load_benchmark, AdaptationCase, LoadMode};
use snipadapt_core::gateway::{SamplingConfig, ScriptedProvider};

pub const FIXTURE_MODEL: &str = "fixture-model";

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn load_cases() -> Vec<AdaptationCase> {
    let bench = load_benchmark(&fixtures_dir().join("benchmark.json"), LoadMode::Strict).unwrap();
    derive_all(&bench.units).unwrap()
}

pub fn case_index(method: &str) -> usize {
    METHODS.iter().position(|m| *m == method).unwrap_or_else(|| panic!("unknown method {method}"))
}

pub const METHODS: [&str; 5] = ["add_item", "get_total", "checkout", "calculate_circle_area", "calculate_sector_area"];

/// What a general-purpose search would return for each method.
pub fn snippet_for(method: &str) -> &'static str {
    match method {
        "add_item" => "def add_item(items, name, price, quantity=1):\n    for item in items:\n        if item['name'] == name:\n            item['quantity'] += quantity\n            return items\n    items.append({'name': name, 'price': price, 'quantity': quantity})\n    return items\n",
        "get_total" => "def get_total(items):\n    total = 0\n    for item in items:\n        total += item['price'] * item['quantity']\n    return total\n",
        "checkout" => "def checkout(items, discount=0.0):\n    if not items:\n        return 0.0\n    amount = sum(i['price'] * i['quantity'] for i in items) * (1 - discount)\n    items.clear()\n    return round(amount, 2)\n",
        "calculate_circle_area" => "def calculate_circle_area(radius):\n    return math.pi * radius ** 2\n",
        "calculate_sector_area" => "def calculate_sector_area(radius, angle):\n    return radius ** 2 * angle / 2\n",
        other => panic!("unknown method {other}"),
    }
}

/// An adaptation that fails its tests, with the category it fails with.
pub fn bad_code(method: &str) -> &'static str {
    match method {
        // AttributeError: the class has no `items` field.
        "add_item" => "def add_item(self, name, price, quantity=1):\n    for item in self.items:\n        if item['name'] == name:\n            item['quantity'] += quantity\n            return\n    self.items.append({'name': name, 'price': price, 'quantity': quantity})\n",
        // TypeError: iterating over the instance.
        "get_total" => "def get_total(items):\n    total = 0\n    for item in items:\n        total += item['price'] * item['quantity']\n    return total\n",
        // NameError: unqualified method call.
        "checkout" => "def checkout(self, discount=0.0):\n    if not self.cart:\n        return 0.0\n    amount = get_total() * (1 - discount)\n    self.cart = []\n    return round(amount, 2)\n",
        // NameError: unqualified field.
        "calculate_circle_area" => "def calculate_circle_area(self):\n    return math.pi * radius ** 2\n",
        // AssertionError: wrong formula.
        "calculate_sector_area" => "def calculate_sector_area(self, angle):\n    return self.radius * angle / 2\n",
        other => panic!("unknown method {other}"),
    }
}

/// Cases with the fixture snippets attached.
pub fn cases_with_snippets() -> Vec<AdaptationCase> {
    load_cases()
        .iter()
        .map(|c| snipadapt_core::dataset::attach_snippet(c, snippet_for(&c.method_name)).unwrap())
        .collect()
}

fn fenced(code: &str) -> String {
    format!("Here is the adapted method.\n\n```python\n{}```\n", code)
}

fn target_method(messages: &[Turn]) -> String {
    let re = Regex::new(r"(?s)### (?:Target Method|Description)\n.*?def (\w+)\(").unwrap();
    messages
        .iter()
        .find_map(|t| re.captures(&t.content).map(|c| c[1].to_string()))
        .expect("conversation names a target method")
}

/// How many of five samples pass, per strategy stage and case index.
fn passing(stage: &str, case: usize) -> usize {
    match stage {
        "initial" => [3, 2, 5, 0, 1][case],
        "enhanced" => [4, 3, 5, 2, 3][case],
        "flipped" => [5, 4, 5, 3, 4][case],
        _ => 5,
    }
}

fn sample_index(sampling: &SamplingConfig) -> usize {
    sampling
        .seed_tag
        .as_deref()
        .and_then(|t| t.strip_prefix('s'))
        .and_then(|t| t.split('-').next())
        .and_then(|t| t.parse().ok())
        .unwrap_or(0)
}

/// A deterministic stand-in for a chat model that follows every protocol
/// of the prompt engine. The canonical solutions come from `cases`.
pub fn fixture_model(cases: Vec<AdaptationCase>) -> ScriptedProvider {
    ScriptedProvider::new(move |messages: &[Turn], sampling: &SamplingConfig| {
        let n = sampling.n_samples as usize;
        if messages.last().unwrap().content.contains("Reply only with \"Understood.\"") {
            return Ok(vec!["Understood.".into(); n]);
        }
        let method = target_method(messages);
        let idx = case_index(&method);
        let canonical = cases.iter().find(|c| c.method_name == method).unwrap().canonical_solution.clone();
        let code = |good: bool| fenced(if good { &canonical } else { bad_code(&method) });
        let system = &messages[0].content;
        let last = &messages.last().unwrap().content;
        let assistant_turns = messages.iter().filter(|t| t.role == Role::Assistant).count();
        let i = sample_index(sampling);

        if system.starts_with("You are a senior developer") {
            return Ok(vec!["1. Yes, keep the behavior described in the docstring.\n2. Use the fields of the class instead of parameters.".into()]);
        }
        if system.starts_with("You are a meticulous code reviewer") {
            let marker = canonical.trim_end().lines().last().unwrap().trim();
            let reply = if !last.contains(marker) && i != 4 {
                "1. The method does not use the class fields correctly.\n2. Compare it with the docstring examples."
            } else {
                "No issues."
            };
            return Ok(vec![reply.into()]);
        }
        if last.contains("### Description") {
            return Ok(vec![fenced(snippet_for(&method)); n]);
        }
        if last.contains("### Interaction") {
            if idx.is_multiple_of(2) {
                return Ok(vec!["1. Should items with the same name be merged?\n2. Should the method use the class fields?".into()]);
            }
            return Ok(vec![code(i < passing("flipped", idx))]);
        }
        if last.contains("### Answers") {
            return Ok(vec![code(i < passing("flipped", idx))]);
        }
        if last.contains("### Review") {
            return Ok(vec![code(i != 4 || passing("enhanced", idx) > 4)]);
        }
        if assistant_turns == 1 {
            return Ok(vec![code(i < passing("enhanced", idx))]);
        }
        Ok((0..n).map(|k| code(k < passing("initial", idx))).collect())
    })
}
