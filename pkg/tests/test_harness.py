import os
import sys
import unittest
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from pqtoken.harness import (
    Deployment,
    Directive,
    ScenarioError,
    VirtualNetwork,
    assert_secrecy,
    load_scenario,
    parse_directive,
    parse_scenario,
    run_interleaved,
    run_scenario,
    scan_store,
    tamper_sweep,
)

SCENARIOS = os.path.join(os.path.dirname(__file__), '..', 'scenarios')


def run(text, name="test"):
    return run_scenario(parse_scenario(text, name))


def labels(outcome):
    return [s.label for s in outcome.steps]


class TestScenarioParsing(unittest.TestCase):
    def test_settings_and_steps(self):
        scenario = parse_scenario(
            "suite l3\nseed 0x10\nmax_time 5\nttl 30m\nlifetime 2d\n"
            "register alice   # comment\n"
            "stamp alice device=4 @s2c=flip:7 expect=BadSignature\n"
        )
        self.assertEqual((scenario.suite, scenario.seed, scenario.max_time), ("L3", 16, 5))
        self.assertEqual((scenario.token_ttl, scenario.key_lifetime), (1800.0, 172800.0))
        stamp = scenario.steps[1]
        self.assertEqual(stamp.args, ("alice",))
        self.assertEqual(stamp.option("device"), "4")
        self.assertEqual(stamp.s2c, Directive("flip", 7))
        self.assertEqual(stamp.expect, "BadSignature")
        self.assertEqual(stamp.line, 7)

    def test_errors_name_the_line(self):
        for text in ("dance alice", "register", "stamp alice @c2s=forge", "stamp alice @s2c=flip:x",
                     "ttl forever", "check"):
            with self.subTest(text=text):
                with self.assertRaisesRegex(ScenarioError, r"^s:1:"):
                    parse_scenario(text, "s")

    def test_directives(self):
        self.assertEqual(parse_directive("modify:2:abcd"), Directive("modify", 2, b"\xab\xcd"))
        self.assertEqual(Directive("flip", 1).apply(b"\x00\x00\x00"), b"\x00\xff\x00")
        self.assertEqual(Directive("modify", 1, b"\x01\x02").apply(b"\x00\x00\x00"), b"\x00\x01\x02")
        self.assertIsNone(Directive("drop").apply(b"abc"))
        with self.assertRaises(ScenarioError):
            Directive("flip", 3).apply(b"abc")

    def test_missing_file(self):
        with self.assertRaises(ScenarioError):
            load_scenario(os.path.join(SCENARIOS, "nope.scn"))


class TestScenarios(unittest.TestCase):
    def test_honest_run(self):
        outcome = run("register alice\ncycle alice\nstamp alice\nstamp alice\ncheck alice\ncheck alice 0")
        self.assertEqual(labels(outcome), ["ok", "ok", "ok", "ok", "valid", "valid"])
        self.assertEqual(len(outcome.session_secrets), 4)
        self.assertTrue(assert_secrecy(outcome))

    def test_replays_are_pinned_to_their_error_codes(self):
        outcome = run("register alice\ncycle alice\nstamp alice\nreplay 0\nreplay 2\nreplay 4\nreplay 1")
        self.assertEqual(labels(outcome)[3:6], ["DUPLICATE_ID", "BAD_SIGNATURE", "BAD_TIME"])
        self.assertTrue(labels(outcome)[6].startswith("error:"))
        self.assertEqual(outcome.store_snapshot["clients"][outcome.deployment.clients["alice"].uuid.hex()]
                         ["expected_time"], 1)
        self.assertEqual(len(outcome.store_snapshot["tokens"]), 1)

    def test_step_failures_do_not_stop_the_run(self):
        outcome = run("stamp ghost\nregister alice\ncheck alice\nstamp alice expect=fail")
        self.assertTrue(outcome.steps[0].label.startswith("error:"))
        self.assertEqual(outcome.steps[1].label, "ok")
        self.assertTrue(outcome.steps[2].label.startswith("error:"))
        self.assertEqual([s.index for s in outcome.failures()], [3])
        self.assertFalse(outcome.ok)

    def test_same_seed_same_transcript(self):
        text = "seed 9\nregister alice\nstamp alice\nstamp alice @s2c=drop"
        first, second = run(text), run(text)
        self.assertEqual([e.body for e in first.transcript], [e.body for e in second.transcript])

    def test_bundled_scenarios(self):
        names = sorted(n for n in os.listdir(SCENARIOS) if n.endswith(".scn"))
        self.assertGreaterEqual(len(names), 7)
        for name in names:
            with self.subTest(scenario=name):
                outcome = run_scenario(load_scenario(os.path.join(SCENARIOS, name)))
                self.assertEqual(outcome.failures(), [])
                leaked = not assert_secrecy(outcome).ok
                self.assertEqual(leaked, name == "server_compromise.scn")


class TestSecrecy(unittest.TestCase):
    def test_many_sessions_leak_nothing(self):
        steps = ["register alice", "register bob"]
        for i in range(50):
            steps += ["stamp alice", "stamp bob"]
            if i % 10 == 9:
                steps.append("cycle alice")
        outcome = run("\n".join(steps))
        self.assertTrue(outcome.ok)
        self.assertEqual(len(outcome.session_secrets), 200)
        verdict = assert_secrecy(outcome)
        self.assertTrue(verdict.ok, verdict.witnesses)
        self.assertGreater(verdict.knowledge_size, 0)

    def test_store_holds_no_token_material(self):
        outcome = run("register alice\n" + "stamp alice\n" * 20)
        secrets = [s.secret for s in outcome.session_secrets]
        secrets += [t.encode() for t in outcome.final_tokens["alice"]]
        self.assertEqual(scan_store(outcome.store_snapshot, secrets), [])

    def test_forward_secrecy_after_every_key_leaks(self):
        outcome = run("register alice\nstamp alice\ncycle alice\nstamp alice\n"
                      "reveal client alice\nreveal admin\nreveal server")
        self.assertTrue(assert_secrecy(outcome).ok)
        self.assertEqual(len(outcome.revealed), 3)

    def test_leaked_token_is_caught(self):
        outcome = run("register alice\nstamp alice\nstamp alice\nreveal token alice")
        verdict = assert_secrecy(outcome)
        self.assertFalse(verdict.ok)
        self.assertEqual({w.step for w in verdict.witnesses}, {2})
        self.assertEqual({w.party for w in verdict.witnesses}, {"client", "server"})

    def test_impersonation_needs_the_server_key(self):
        outcome = run("register alice\nimpersonate\nstamp alice")
        self.assertEqual(outcome.steps[2].label, "BadSignature")
        self.assertTrue(assert_secrecy(outcome).ok)

    def test_server_compromise_breaks_later_sessions_only(self):
        outcome = run("register alice\nstamp alice\nreveal server\nimpersonate\nstamp alice\ncheck alice")
        self.assertEqual(outcome.steps[4].label, "ok")
        self.assertEqual(outcome.steps[5].label, "unknown")
        verdict = assert_secrecy(outcome)
        self.assertEqual([(w.step, w.party) for w in verdict.witnesses], [(4, "client")])


class TestTamperSweep(unittest.TestCase):
    def assert_clean(self, report):
        self.assertGreater(report.attempts, 0)
        self.assertEqual(report.acceptances, [])
        self.assertEqual(report.mutations, [])
        self.assertTrue(report.ok)

    def test_register(self):
        report = tamper_sweep("register", seed=1)
        self.assertEqual(report.attempts, report.message_sizes["c2s"] + report.message_sizes["s2c"])
        self.assert_clean(report)

    def test_cycle(self):
        self.assert_clean(tamper_sweep("cycle", seed=2))

    def test_stamp(self):
        report = tamper_sweep("stamp", seed=3)
        self.assertEqual(report.message_sizes["c2s"], 1 + 74 + 800 + 2420)
        self.assert_clean(report)

    def test_unknown_action(self):
        with self.assertRaises(ScenarioError):
            tamper_sweep("check")


class TestNetwork(unittest.TestCase):
    def test_fork_is_independent(self):
        dep = Deployment(seed=5)
        net = VirtualNetwork(dep)
        client, _ = net.exchange(dep.register_machine())
        dep.clients["alice"] = client.unwrap()
        fork = dep.fork()
        fork_result, _ = VirtualNetwork(fork).exchange(fork.stamp_machine("alice"))
        self.assertTrue(fork_result.ok)
        self.assertEqual(dep.clients["alice"].protocol_time.counter, 0)
        self.assertEqual(dep.store.get_client(dep.clients["alice"].uuid).expected_time, 0)

    def test_forks_draw_from_their_own_random_stream(self):
        dep = Deployment(seed=5)
        state = dep.rng.getstate()
        a, b = dep.fork(), dep.fork()
        keys = a.provider.generate_signing_keypair()
        self.assertEqual(keys, b.provider.generate_signing_keypair())
        self.assertEqual(a.random_bytes(16), b.random_bytes(16))
        self.assertEqual(dep.rng.getstate(), state)
        signature = a.provider.sign(b"m", keys.private_key)
        self.assertTrue(dep.provider.verify(signature, b"m", keys.public_key))

    def test_dropped_request_never_reaches_the_server(self):
        dep = Deployment()
        net = VirtualNetwork(dep)
        client, server = net.exchange(dep.register_machine(), c2s=Directive("drop"))
        self.assertEqual(type(client.error).__name__, "TransportError")
        self.assertIsNone(server)
        self.assertEqual(len(net.transcript), 1)
        self.assertIsNone(net.transcript[0].delivered)


class TestInterleaving(unittest.TestCase):
    def test_concurrent_stamps(self):
        report = run_interleaved(n_clients=4, sessions=100, seed=11)
        self.assertTrue(report.injective)
        self.assertTrue(report.consecutive)
        self.assertGreater(len(report.client_tokens), 0)
        self.assertEqual(len(report.client_tokens), len(report.store_token_hashes))
        self.assertEqual(len(report.client_tokens) + report.resyncs, 100)

    def test_with_key_cycles(self):
        report = run_interleaved(n_clients=3, sessions=120, seed=12, cycle_probability=0.2)
        self.assertGreater(report.cycles, 0)
        self.assertTrue(report.injective)
        self.assertTrue(report.consecutive)


if __name__ == '__main__':
    unittest.main()
