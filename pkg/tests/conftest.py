from __future__ import annotations

import random

import pytest

from opsig.apitable import default_api_table, default_permission_map
from opsig.signature import Signer
from opsig.synth import build_app, make_class, make_method

GET_DEFAULT = "android/telephony/SmsManager;->getDefault"
GET_BROADCAST = "android/app/PendingIntent;->getBroadcast"
INTENT_INIT = "android/content/Intent;-><init>"
SEND_SMS = "android/telephony/gsm/SmsManager;->sendTextMessage"
INSTALL = "android/content/pm/PackageManager;->installPackage"


@pytest.fixture(scope="session")
def table():
    return default_api_table()


@pytest.fixture(scope="session")
def pmap():
    return default_permission_map()


@pytest.fixture(scope="session")
def signer(table):
    return Signer(table)


@pytest.fixture
def rng():
    return random.Random(20121130)


@pytest.fixture
def sms_app(table):
    """Entry Main.onCreate -> Main.send (3 API calls); Main.unused is dead."""
    main = make_class(
        "com/example/Main",
        {
            "onCreate": [INTENT_INIT, "com/example/Main;->send"],
            "send": [GET_DEFAULT, GET_BROADCAST, INTENT_INIT],
            "unused": [SEND_SMS],
        },
    )
    helper = make_class("com/example/Helper", {"run": ["android/util/Log;->d"]})
    return build_app([main, helper], table, ["com/example/Main;->onCreate()V"], package="com.example.sms")


ACCEPTANCE_LINES: list[str] = []


class _Criterion:
    def __init__(self, number: int, title: str):
        self.number, self.title = number, title

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        status = "PASS" if exc_type is None else "FAIL"
        line = f"[{status}] criterion {self.number}: {self.title}"
        if exc is not None:
            line += f" ({exc_type.__name__}: {str(exc).splitlines()[0] if str(exc) else ''})"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return False


@pytest.fixture
def criterion():
    return _Criterion


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
