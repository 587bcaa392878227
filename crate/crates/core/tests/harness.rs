mod common;

use common::faults::*;
use snipadapt_core::harness::{assemble_program, ErrorCategory, Executor, Limits, SuiteStatus, TestStatus};
use snipadapt_core::metrics::error_distribution;

#[tokio::test]
async fn canonical_solutions_pass() {
    for case in common::load_cases() {
        let program = assemble_program(&case, &case.canonical_solution).unwrap();
        let o = executor(10.0).run_tests(&program, &case.test_source).await;
        assert_eq!(o.suite_status, SuiteStatus::AllPass, "{}: {o:?}", case.case_id);
        assert!(!o.per_test.is_empty());
    }
}

#[tokio::test]
async fn undefined_name_is_a_name_error() {
    let o = run("checkout", UNDEFINED_NAME, 10.0).await;
    assert_eq!(o.suite_status, SuiteStatus::SomeFail);
    let cats = failing_categories(&o);
    assert!(!cats.is_empty());
    assert!(cats.iter().all(|c| *c == ErrorCategory::NameError), "{cats:?}");
}

#[tokio::test]
async fn wrong_arity_is_a_type_error() {
    let o = run("checkout", WRONG_ARITY, 10.0).await;
    let cats = failing_categories(&o);
    assert!(!cats.is_empty());
    assert!(cats.iter().all(|c| *c == ErrorCategory::TypeError), "{cats:?}");
}

#[tokio::test]
async fn attribute_misuse_is_an_attribute_error() {
    let o = run("checkout", ATTRIBUTE_MISUSE, 10.0).await;
    let cats = failing_categories(&o);
    assert!(!cats.is_empty());
    assert!(cats.iter().all(|c| *c == ErrorCategory::AttributeError), "{cats:?}");
}

#[tokio::test]
async fn infinite_loop_times_out() {
    let started = std::time::Instant::now();
    let o = run("checkout", INFINITE_LOOP, 1.5).await;
    assert_eq!(o.suite_status, SuiteStatus::Timeout);
    assert_eq!(o.error_categories(), [ErrorCategory::Timeout]);
    assert!(started.elapsed().as_secs_f64() < 6.0);
}

#[tokio::test]
async fn histogram_conserves_counts() {
    let mut outcomes = Vec::new();
    for code in [UNDEFINED_NAME, WRONG_ARITY, ATTRIBUTE_MISUSE, INFINITE_LOOP] {
        outcomes.push(run("checkout", code, 1.5).await);
    }
    let expected: usize = outcomes
        .iter()
        .map(|o| match o.suite_status {
            SuiteStatus::Timeout | SuiteStatus::Crash => 1,
            _ => o.per_test.iter().filter(|t| t.status != TestStatus::Pass).count(),
        })
        .sum();
    let hist = error_distribution(outcomes.iter().flat_map(|o| o.error_categories()));
    assert_eq!(hist.values().sum::<usize>(), expected);
    for cat in [ErrorCategory::NameError, ErrorCategory::TypeError, ErrorCategory::AttributeError, ErrorCategory::Timeout] {
        assert!(hist[&cat] > 0, "{cat}");
    }
    assert_eq!(hist[&ErrorCategory::Timeout], 1);
}

#[tokio::test]
async fn module_level_errors_crash_the_suite() {
    let o = executor(10.0).run_tests("import not_a_real_module_xyz\n", "import unittest\n").await;
    assert_eq!(o.suite_status, SuiteStatus::Crash);
    assert_eq!(o.error_categories(), [ErrorCategory::Other]);
    assert_eq!(o.crash.as_ref().unwrap().error_type, "ModuleNotFoundError");
    let o = executor(10.0).run_tests("x = 1\n", "import unittest\n").await;
    assert_eq!(o.suite_status, SuiteStatus::Crash, "no tests discovered");
}

#[tokio::test]
async fn child_is_isolated() {
    std::env::set_var("SNIPADAPT_TEST_SECRET", "leak");
    let parent_cwd = std::env::current_dir().unwrap();
    let tests = format!(
        r#"import os, sys, unittest

class Isolation(unittest.TestCase):
    def test_env(self):
        self.assertNotIn("SNIPADAPT_TEST_SECRET", os.environ)
        self.assertEqual(os.environ["HOME"], os.getcwd())
        self.assertEqual(os.environ["PYTHONHASHSEED"], "0")

    def test_cwd(self):
        self.assertNotEqual(os.getcwd(), {cwd:?})
        with open("scratch.txt", "w") as f:
            f.write("x")

    def test_isolated_mode(self):
        self.assertTrue(sys.flags.isolated)
        self.assertTrue(sys.flags.dont_write_bytecode)

    def test_print_does_not_corrupt_protocol(self):
        print("noise on stdout")
"#,
        cwd = parent_cwd.display().to_string()
    );
    let o = executor(10.0).run_tests("", &tests).await;
    assert_eq!(o.suite_status, SuiteStatus::AllPass, "{o:?}");
    assert_eq!(o.per_test.len(), 4);
    assert!(!parent_cwd.join("scratch.txt").exists());
}

#[tokio::test]
async fn memory_cap_is_enforced() {
    let tests = "import unittest\n\nclass Big(unittest.TestCase):\n    def test_alloc(self):\n        x = bytearray(400 * 1024 * 1024)\n";
    let small = Executor::new(
        "python3",
        Limits {
            memory_mb: 128,
            ..Limits::default()
        },
        1,
    );
    let o = small.run_tests("", tests).await;
    assert!(!o.passed());
    assert_eq!(o.error_categories(), [ErrorCategory::Other], "{o:?}");
    assert_eq!(o.per_test[0].error_type, "MemoryError");
}
