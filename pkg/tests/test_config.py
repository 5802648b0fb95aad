import os
import shutil
import sys
import tempfile
import unittest
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from pqtoken.config import (
    Config,
    ConfigError,
    get_env_safe,
    load_config,
    parse_duration,
    parse_env_file,
    parse_overrides,
)
from pqtoken.protocol import ServerPolicy
from pqtoken.wire import U64_MAX


class TestEnvFile(unittest.TestCase):
    def setUp(self):
        self.tmpdir = tempfile.mkdtemp()
        self.path = os.path.join(self.tmpdir, 'server.conf')

    def tearDown(self):
        shutil.rmtree(self.tmpdir, ignore_errors=True)

    def write(self, text):
        with open(self.path, 'w') as f:
            f.write(text)

    def test_parse(self):
        self.write('# server\nSUITE=L3\nlisten = "0.0.0.0:9000"\n\ntoken_ttl=\'30m\'\r\n')
        self.assertEqual(parse_env_file(self.path), {'suite': 'L3', 'listen': '0.0.0.0:9000', 'token_ttl': '30m'})

    def test_bad_line(self):
        self.write('suite L3\n')
        with self.assertRaisesRegex(ConfigError, ':1:'):
            parse_env_file(self.path)

    def test_missing_file(self):
        with self.assertRaises(ConfigError):
            parse_env_file(os.path.join(self.tmpdir, 'absent.conf'))

    def test_layering(self):
        self.write('suite=L3\ntoken_ttl=30m\nlisten=0.0.0.0:9000\n')
        environ = {'PQTOKEN_TOKEN_TTL': ' 2h\r', 'PQTOKEN_MAX_CONNECTIONS': '8'}
        config = load_config(self.path, overrides={'listen': '127.0.0.1:1'}, environ=environ)
        self.assertEqual(config.suite, 'L3')
        self.assertEqual(config.token_ttl, 7200.0)
        self.assertEqual(config.max_connections, 8)
        self.assertEqual(config.listen_address, ('127.0.0.1', 1))


class TestValues(unittest.TestCase):
    def test_defaults(self):
        config = load_config(environ={})
        self.assertEqual(config, Config())
        self.assertEqual(config.suite_id.wire_byte, 0x01)
        self.assertEqual(config.max_protocol_time, U64_MAX)
        self.assertEqual(config.server_policy(), ServerPolicy())

    def test_durations(self):
        self.assertEqual(parse_duration('90d'), 90 * 86400)
        self.assertEqual(parse_duration('1H'), 3600)
        self.assertEqual(parse_duration('45'), 45)
        for bad in ('', 'soon', '0', '-5m'):
            with self.assertRaises(ConfigError):
                parse_duration(bad)

    def test_rejections(self):
        cases = {
            'suite': 'L2', 'provider': 'openssl', 'listen': '7474', 'max_connections': '0',
            'keep_alive': 'maybe', 'max_protocol_time': str(U64_MAX + 1), 'colour': 'blue',
        }
        for key, val in cases.items():
            with self.subTest(key=key):
                with self.assertRaises(ConfigError):
                    load_config(overrides={key: val}, environ={})

    def test_suite_spelling_is_normalised(self):
        config = load_config(overrides={'suite': 'l5', 'keep_alive': 'yes'}, environ={})
        self.assertEqual((config.suite, config.keep_alive), ('L5', True))

    def test_overrides(self):
        self.assertEqual(parse_overrides(['Suite=L3', 'listen = h:1']), {'suite': 'L3', 'listen': 'h:1'})
        with self.assertRaises(ConfigError):
            parse_overrides(['suite'])

    def test_get_env_safe(self):
        self.assertEqual(get_env_safe('X', environ={'X': ' value\r\n'}), 'value')
        self.assertIsNone(get_env_safe('X', environ={}))
        self.assertEqual(get_env_safe('X', 'd', environ={}), 'd')


if __name__ == '__main__':
    unittest.main()
