"""Runs a program's unittest suite and reports per-test results as JSON.

Reads {"source", "test_source", "per_test_timeout_s"} on stdin and writes
{"results": [...], "fatal": null | {...}} on the original stdout.
"""

import io
import json
import os
import signal
import sys
import types
import unittest


class _Timeout(BaseException):
    pass


def _on_alarm(signum, frame):
    raise _Timeout()


def _describe(err):
    exc_type, exc, _ = err
    if exc_type is _Timeout:
        return "Timeout", "test exceeded the per-test time limit"
    return exc_type.__name__, str(exc)


class _Result(unittest.TestResult):
    def __init__(self):
        super().__init__()
        self.records = []

    def _name(self, test):
        return "%s.%s" % (type(test).__name__, test._testMethodName)

    def addSuccess(self, test):
        self.records.append({"name": self._name(test), "status": "pass", "error_type": "", "message": ""})

    def addFailure(self, test, err):
        error_type, message = _describe(err)
        self.records.append({"name": self._name(test), "status": "fail", "error_type": error_type, "message": message})

    def addError(self, test, err):
        error_type, message = _describe(err)
        self.records.append({"name": self._name(test), "status": "error", "error_type": error_type, "message": message})

    def addSkip(self, test, reason):
        self.records.append({"name": self._name(test), "status": "pass", "error_type": "", "message": "skipped: " + reason})

    def addExpectedFailure(self, test, err):
        self.addSuccess(test)

    def addUnexpectedSuccess(self, test):
        self.records.append({"name": self._name(test), "status": "fail", "error_type": "AssertionError", "message": "unexpected success"})


def _collect(namespace):
    loader = unittest.TestLoader()
    suite = unittest.TestSuite()
    for value in list(namespace.values()):
        if isinstance(value, type) and issubclass(value, unittest.TestCase) and value.__module__ == namespace["__name__"]:
            suite.addTests(loader.loadTestsFromTestCase(value))
    return suite


def _run_test(test, result, timeout):
    if timeout:
        signal.signal(signal.SIGALRM, _on_alarm)
        signal.setitimer(signal.ITIMER_REAL, timeout)
    try:
        test(result)
    except _Timeout:
        result.addError(test, (_Timeout, _Timeout(), None))
    finally:
        if timeout:
            signal.setitimer(signal.ITIMER_REAL, 0)


def execute(request):
    module = types.ModuleType("program")
    namespace = module.__dict__
    sys.modules["program"] = module
    for label, text in (("program.py", request["source"]), ("tests.py", request["test_source"])):
        try:
            exec(compile(text, label, "exec"), namespace)
        except BaseException as exc:
            return {"results": [], "fatal": {"error_type": type(exc).__name__, "message": str(exc)}}
    result = _Result()
    timeout = request.get("per_test_timeout_s") or 0
    for test in _collect(namespace):
        _run_test(test, result, timeout)
    return {"results": result.records, "fatal": None}


def main():
    # Keep the protocol channel private: tests write to a sink.
    channel = os.fdopen(os.dup(1), "w", encoding="utf-8")
    sink = os.open(os.devnull, os.O_WRONLY)
    os.dup2(sink, 1)
    try:
        request = json.loads(sys.stdin.read())
        if not isinstance(request, dict) or "source" not in request or "test_source" not in request:
            raise ValueError("request needs source and test_source")
    except ValueError as exc:
        sys.stderr.write("malformed request: %s\n" % exc)
        return 2
    real_stdout, real_stderr = sys.stdout, sys.stderr
    sys.stdout = io.StringIO()
    sys.stderr = io.StringIO()
    try:
        report = execute(request)
    finally:
        sys.stdout, sys.stderr = real_stdout, real_stderr
    channel.write(json.dumps(report))
    channel.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())
