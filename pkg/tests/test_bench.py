import os
import sys
import unittest
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from pqtoken.bench import BenchRow, _timed_verify, bench, find_row, format_csv, format_table
from pqtoken.protocol.identity import ServerIdentity
from pqtoken.protocol.server import ServerContext
from pqtoken.providers import get_provider, liboqs_available
from pqtoken.providers.symbolic import SymbolicProvider
from pqtoken.state import MemoryStore, TokenRecord
from pqtoken.suite import get_suite
from pqtoken.utils.system_info import device_label, format_device_info, get_device_info


class TestBenchRows(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.rows = bench("L1", SymbolicProvider(get_suite("L1")), runs=3, device="test")

    def test_one_row_per_role_and_operation(self):
        self.assertEqual(len(self.rows), 8)
        for role in ("client", "server"):
            for op in ("register", "cycle", "stamp", "verify"):
                self.assertEqual(find_row(self.rows, role, op).device, "test")

    def test_clients_never_verify(self):
        row = find_row(self.rows, "client", "verify")
        self.assertIsNone(row.mean_ms)
        self.assertEqual(row.cells[3:], ("N/A", "N/A"))
        self.assertGreater(find_row(self.rows, "server", "verify").mean_ms, 0)

    def test_formats(self):
        csv_lines = format_csv(self.rows).splitlines()
        self.assertEqual(csv_lines[0], "device,role,operation,mean_ms,std_ms")
        self.assertIn("test,client,verify,N/A,N/A", csv_lines)
        table = format_table(self.rows)
        self.assertEqual(len(table.splitlines()), 10)

    def test_runs_must_be_positive(self):
        with self.assertRaises(ValueError):
            bench("L1", SymbolicProvider(get_suite("L1")), runs=0)

    def test_missing_row(self):
        with self.assertRaises(KeyError):
            find_row([BenchRow("d", "client", "cycle", 1.0, 0.0)], "server", "cycle")


class TestTimedVerify(unittest.TestCase):
    def setUp(self):
        suite = get_suite("L1")
        self.provider = SymbolicProvider(suite)
        self.ctx = ServerContext(ServerIdentity(self.provider.generate_signing_keypair(), suite), self.provider,
                                 clock=lambda: 100.0)
        self.store = MemoryStore()
        self.token = bytes(74)

    def test_live_token(self):
        self.store.insert_token(TokenRecord(self.provider.hash(self.token), b"a" * 16, bytes(16), 90.0, 200.0))
        self.assertGreater(_timed_verify(self.token, self.ctx, self.store, batch=10), 0)

    def test_unknown_token(self):
        with self.assertRaises(RuntimeError):
            _timed_verify(self.token, self.ctx, self.store, batch=10)


class TestDeviceInfo(unittest.TestCase):
    def test_report(self):
        info = get_device_info()
        self.assertGreater(info["cores_logical"], 0)
        self.assertGreater(info["ram_total"], 0)
        self.assertIn("Device report", format_device_info())
        self.assertTrue(device_label())


@unittest.skipUnless(liboqs_available(), 'liboqs-python not installed')
class TestLiboqsTimings(unittest.TestCase):
    def test_verification_is_orders_of_magnitude_cheaper(self):
        rows = bench("L1", get_provider("liboqs", "L1"), runs=30)

        def action(op):
            return find_row(rows, "client", op).mean_ms + find_row(rows, "server", op).mean_ms

        verify = find_row(rows, "server", "verify").mean_ms
        self.assertLessEqual(verify * 100, action("stamp"))
        self.assertLessEqual(action("stamp"), action("cycle"))
        self.assertLess(verify, find_row(rows, "server", "stamp").mean_ms)


if __name__ == '__main__':
    unittest.main()
