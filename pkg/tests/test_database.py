import sqlite3
import unittest

from database.database import (DatabaseInitializeError, SQLConnection, SQLCursor, SQLRollback, fetch_errors,
                               fetch_runs, record_error, record_run)
from tests.helpers import TempDirMixin


class TestSQLConnection(TempDirMixin, unittest.TestCase):
    def test_creates_tables(self):
        with SQLConnection(self.path('sub', 'ledger.sqlite3')) as connection:
            self.assertEqual(connection.table_check(), 0)
            self.assertEqual(fetch_runs(connection), [])

    def test_schema_mismatch(self):
        path = self.path('bad.sqlite3')
        raw = sqlite3.connect(path)
        raw.execute('CREATE TABLE experiment_runs (config_id TEXT, extra REAL);')
        raw.commit()
        raw.close()
        with self.assertLogs('database.database', level='ERROR'):
            with self.assertRaises(DatabaseInitializeError):
                SQLConnection(path)
        with SQLConnection(path, force=True) as connection:
            self.assertEqual(connection.table_check(), 0)

    def test_partial_database(self):
        path = self.path('partial.sqlite3')
        with SQLConnection(path) as connection:
            with SQLCursor(connection) as cur:
                cur.execute('DROP TABLE error_messages;')
            self.assertEqual(connection.table_check(), 2)
        with SQLConnection(path) as connection:
            self.assertEqual(connection.table_check(), 0)


class TestSQLCursor(TempDirMixin, unittest.TestCase):
    def setUp(self):
        super().setUp()
        self.connection = SQLConnection(self.path('ledger.sqlite3'))
        self.addCleanup(self.connection.close)

    def test_rollback(self):
        with SQLCursor(self.connection) as cur:
            cur.execute("INSERT INTO experiment_runs (config_id, status) VALUES ('a', 'ok');")
            raise SQLRollback()
        self.assertEqual(fetch_runs(self.connection), [])

    def test_other_errors_roll_back_and_propagate(self):
        with self.assertRaises(KeyError):
            with SQLCursor(self.connection) as cur:
                cur.execute("INSERT INTO experiment_runs (config_id, status) VALUES ('a', 'ok');")
                raise KeyError('a')
        self.assertEqual(fetch_runs(self.connection), [])

    def test_record_and_fetch(self):
        record_run(self.connection, 'b', 'fixture:pima', 'max', 'group', True, 'ok', 'runs/b')
        record_run(self.connection, 'a', 'fixture:pima', 'greedy', 'individual', False, 'ok', 'runs/a')
        record_run(self.connection, 'a', 'fixture:pima', 'greedy', 'individual', False, 'failed', 'runs/a')
        self.assertEqual(fetch_runs(self.connection), [
            ('a', 'fixture:pima', 'greedy', 'individual', 0, 'failed', 'runs/a'),
            ('b', 'fixture:pima', 'max', 'group', 1, 'ok', 'runs/b'),
        ])

        record_error(self.connection, 'a', 'detectors', 'DetectorError', 'boom', 'Traceback ...', 'sweep --dataset x')
        record_error(self.connection, 'b', 'dataset', 'DatasetParseError', 'bad', 'Traceback ...', 'sweep')
        self.assertEqual(len(fetch_errors(self.connection)), 2)
        self.assertEqual(fetch_errors(self.connection, 'a'), [
            ('a', 'detectors', 'DetectorError', 'boom', 'sweep --dataset x', 'Traceback ...')])

    def test_record_run_drops_earlier_errors(self):
        record_error(self.connection, 'a', 'dataset', 'DatasetParseError', 'bad', 'Traceback ...', 'sweep')
        record_error(self.connection, 'b', 'dataset', 'DatasetParseError', 'bad', 'Traceback ...', 'sweep')
        record_run(self.connection, 'a', 'fixture:pima', 'max', 'group', True, 'ok', 'a')
        self.assertEqual(fetch_errors(self.connection, 'a'), [])
        self.assertEqual([row[0] for row in fetch_errors(self.connection)], ['b'])


if __name__ == '__main__':
    unittest.main()
