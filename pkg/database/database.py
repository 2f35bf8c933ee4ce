import json
import logging
import os
import sqlite3

logger = logging.getLogger(__name__)

SCHEMA_PATH = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'schema.json')


class DatabaseInitializeError(Exception):
    """ Raised when the database can't be initialized properly """
    pass


class SQLRollback(BaseException):
    """ Raise this exception to rollback an SQLCursor operation """
    pass


class SQLCursor:
    """ Cursor object for sqlite3 database.

    Manages automatic creation/committing of data.
    To use:
        connection = SQLConnection('runs/ledger.sqlite3')

        with SQLCursor(connection) as cursor:
            do_things_with(cursor)
            if something_is_wrong:
                raise SQLRollback()  # jump out of the with statement and rollback the changes

        do_other_things()  # cursor is closed and committed before this line, unless SQLRollback was raised
    """

    def __init__(self, connection):
        self.con = connection

    def __enter__(self):
        self.cur = self.con.raw.cursor()
        return self.cur

    def __exit__(self, xtype, xvalue, xtraceback):
        """ If SQLRollback or any other error was raised, rollback changes and exit.
        Otherwise, commit and exit.
        """
        if xtype is None:
            self.con.raw.commit()
        else:
            self.con.raw.rollback()

        self.cur.close()

        return xtype == SQLRollback  # suppress SQLRollback only


class SQLConnection:
    def __init__(self, path, schema_path=SCHEMA_PATH, force=False):
        """ Check database integrity and create missing tables.

        Parameters:
          path = sqlite3 file; parent directories are created
          force = if the tables do not match schema.json, drop and re-create
                  them instead of raising DatabaseInitializeError
        """
        self.table_prefix = ''
        self.path = path
        directory = os.path.dirname(os.path.abspath(path))
        os.makedirs(directory, exist_ok=True)
        self.raw = sqlite3.connect(path)
        with open(schema_path) as schema_file:
            self.schema = json.load(schema_file)

        table_status = self.table_check()
        if table_status == 0:
            return
        elif table_status == 1:
            logger.info('database %s is empty, initializing', path)
            self.setup_tables(force=False)
        elif table_status == 2:
            logger.info('some tables are missing from %s, creating them', path)
            self.setup_tables(force=False)
        elif force:
            logger.warning('%s does not match the expected schema; deleting all data and re-initializing', path)
            self.setup_tables(force=True)
        else:
            self.raw.close()
            raise DatabaseInitializeError('{0} does not match the expected schema'.format(path))

    def close(self):
        self.raw.close()

    def __enter__(self):
        return self

    def __exit__(self, xtype, xvalue, xtraceback):
        self.close()

    def _columns_of(self, tname):
        """ [(column name, declared type)] parsed from the CREATE TABLE statement """
        with SQLCursor(self) as cur:
            cur.execute("SELECT sql FROM sqlite_master WHERE type='table' AND name=?;", (tname,))
            sql = cur.fetchone()[0]
        columns = []
        for column in sql[sql.find('(') + 1:sql.rfind(')')].split(','):
            parts = column.strip().split(' ')
            columns.append((parts[0], parts[1] if len(parts) > 1 else ''))
        return columns

    def table_check(self, schema=None, table_prefix=None):
        """ Verify the table structure in the database
        Parameters:
          schema = list from schema.json, detailing the expected table schema
          table_prefix = if present, prepend this to table names as specified in the schema
        Returns:
          0 if everything is normal
          1 if the database is empty
          2 if some tables are present but others are absent
          3 if tables do not follow the expected schema
        """
        if not schema:
            schema = self.schema
        if not table_prefix:
            table_prefix = self.table_prefix

        all_tables_present = True
        database_empty = True
        schema_ok = True

        with SQLCursor(self) as cur:
            cur.execute("SELECT name FROM sqlite_master WHERE type = 'table';")
            present = [row[0] for row in cur.fetchall()]

        for table in schema:
            tname = table_prefix + table['table_name']
            if tname not in present:
                all_tables_present = False  # missing table
                continue
            database_empty = False
            expected = {col['column_name']: col['type'].lower() for col in table['schema']}
            res = self._columns_of(tname)

            if len(res) != len(expected):
                logger.error('table %s: missing column(s)', tname)
                schema_ok = False

            for name, ctype in res:
                if name not in expected:
                    logger.error('table %s: unexpected column %s', tname, name)
                    schema_ok = False
                elif expected[name] != ctype.lower():
                    logger.error('table %s: type mismatch on column %s', tname, name)
                    schema_ok = False

        if not schema_ok:
            return 3
        elif database_empty:
            return 1
        elif not all_tables_present:
            return 2
        else:
            return 0

    def setup_tables(self, force=False):
        """ Sets up the tables in the sqlite3 database
        Parameters:
          force = whether to delete all tables and re-initialize. This
                  option is DANGEROUS, and should not be used unless necessary
        """
        if force:  # delete all present tables
            with SQLCursor(self) as cur:
                cur.execute("SELECT name FROM sqlite_master WHERE type = 'table';")
                for (tname,) in cur.fetchall():
                    logger.warning('removing table %s', tname)
                    cur.execute('DROP TABLE ' + tname + ';')

        with SQLCursor(self) as cur:
            cur.execute("SELECT name FROM sqlite_master WHERE type = 'table';")
            table_list = [row[0] for row in cur.fetchall()]

            for table in self.schema:
                tname = self.table_prefix + table['table_name']
                if tname in table_list:
                    continue  # ignore tables which already exist
                columns = []
                for column in table['schema']:
                    text = column['column_name'] + ' ' + column['type']
                    if column.get('primary'):  # columns with primary:true are PRIMARY KEY columns
                        text += ' PRIMARY KEY'
                    columns.append(text)
                cmd = 'CREATE TABLE ' + tname + ' (' + ', '.join(columns) + ');'
                logger.debug('creating table %s with command `%s`', tname, cmd)
                cur.execute(cmd)


def record_run(connection, config_id, dataset, base_method, fairness, weighted_f1, status, output_dir):
    """ Insert or replace the experiment_runs row of one config and drop its earlier error_messages rows """
    with SQLCursor(connection) as cur:
        cur.execute('DELETE FROM error_messages WHERE config_id=?;', (config_id,))
        cur.execute(
            'INSERT OR REPLACE INTO experiment_runs (config_id, dataset, base_method, fairness, weighted_f1, '
            'status, output_dir) VALUES (?,?,?,?,?,?,?);',
            (config_id, dataset, base_method, fairness, int(weighted_f1), status, output_dir))


def record_error(connection, config_id, stage, error_name, error_text, full_backtrace, full_command_string):
    with SQLCursor(connection) as cur:
        cur.execute(
            'INSERT INTO error_messages (config_id, stage, error_name, error_text, full_backtrace, '
            'full_command_string) VALUES (?,?,?,?,?,?);',
            (config_id, stage, error_name, error_text, full_backtrace, full_command_string))


def fetch_errors(connection, config_id=None):
    """ Rows of (config_id, stage, error_name, error_text, full_command_string, full_backtrace) """
    query = ('SELECT config_id, stage, error_name, error_text, full_command_string, full_backtrace '
             'FROM error_messages')
    params = ()
    if config_id:
        query += ' WHERE config_id=?'
        params = (config_id,)
    with SQLCursor(connection) as cur:
        cur.execute(query + ' ORDER BY rowid;', params)
        return cur.fetchall()


def fetch_runs(connection):
    with SQLCursor(connection) as cur:
        cur.execute('SELECT config_id, dataset, base_method, fairness, weighted_f1, status, output_dir '
                    'FROM experiment_runs ORDER BY config_id;')
        return cur.fetchall()
