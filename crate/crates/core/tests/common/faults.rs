//! Faulty adaptations of `checkout` and helpers to run them.

use snipadapt_core::dataset::AdaptationCase;
use snipadapt_core::harness::{assemble_program, ErrorCategory, Executor, Limits, TestOutcome, TestStatus};

pub fn case(method: &str) -> AdaptationCase {
    super::load_cases().into_iter().find(|c| c.method_name == method).unwrap()
}

pub fn executor(timeout_s: f64) -> Executor {
    Executor::new(
        "python3",
        Limits {
            timeout_s,
            ..Limits::default()
        },
        4,
    )
}

pub async fn run(method: &str, code: &str, timeout_s: f64) -> TestOutcome {
    let case = case(method);
    let program = assemble_program(&case, code).unwrap();
    executor(timeout_s).run_tests(&program, &case.test_source).await
}

pub fn failing_categories(o: &TestOutcome) -> Vec<ErrorCategory> {
    o.per_test.iter().filter(|t| t.status != TestStatus::Pass).filter_map(|t| t.error_category).collect()
}

pub const UNDEFINED_NAME: &str = "def checkout(self, discount=0.0):\n    if not self.cart:\n        return 0.0\n    amount = get_total() * (1 - discount)\n    self.cart = []\n    return round(amount, 2)\n";
pub const WRONG_ARITY: &str = "def checkout(self, discount=0.0):\n    if not self.cart:\n        return 0.0\n    amount = self.get_total(discount)\n    self.cart = []\n    return round(amount, 2)\n";
pub const ATTRIBUTE_MISUSE: &str = "def checkout(self, discount=0.0):\n    if not self.cart:\n        return 0.0\n    amount = self.cart.total() * (1 - discount)\n    self.cart = []\n    return round(amount, 2)\n";
pub const INFINITE_LOOP: &str = "def checkout(self, discount=0.0):\n    while True:\n        pass\n";
