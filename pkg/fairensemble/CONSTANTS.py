# Misc
PROJECT_NAME = 'FairEnsemble'
BUG_REPORT_HINT = 'attach the command line and the run directory meta.txt when reporting bugs'

# Numerics
DEFAULT_RIDGE = 1e-8
LOF_DENSITY_EPS = 1e-10  # same guard sklearn's LocalOutlierFactor uses
COF_EPS = 1e-12
GREEDY_MIN_DECREASE = 1e-12  # below this a correlation change is rounding noise
DISTANCE_BLOCK_ROWS = 1024

# Base detector grids
LOF_NEIGHBORS = (5, 10, 15, 20, 25, 30)
KNN_K = (2, 4, 6, 8, 10)
IFOREST_TREES = (25, 50, 75, 100, 125, 150, 175)
IFOREST_MAX_SUBSAMPLE = 256

# Alpha grids
ALPHA_LOG_COUNT = 50
ALPHA_MIN = 1e-3
ALPHA_MAX = 1e3
COF_SAMPLES = 100

# Synthetic protected attribute
DEFAULT_BIAS_STRENGTH = 0.5
FIXTURE_BIAS_STRENGTH = 0.8
FIXTURE_SEED = 20210501
FIXTURE_SIZE = 240
FIXTURE_FEATURES = 6
FIXTURE_MIN_OUTLIERS = 8

# Benchmark roster: name -> (inliers, outliers, groups)
DATASET_TABLE = {
    'communities': (1717, 277, 4),
    'german': (700, 300, 4),
    'annthyroid': (6666, 534, 2),
    'cardio': (1655, 176, 2),
    'vowels': (1406, 50, 3),
    'breast_cancer': (444, 239, 3),
    'mammography': (10923, 260, 4),
    'pima': (500, 268, 4),
}
NATIVE_GROUP_DATASETS = ('communities', 'german')
CUSTOM_DATASET = 'custom'
FIXTURE_PREFIX = 'fixture:'

# Communities and Crime column layout (0-based, 128 columns, no header)
COMMUNITIES_NON_PREDICTIVE = (0, 1, 2, 3, 4)
COMMUNITIES_RACE_COLUMNS = (7, 8, 9, 10)  # black, white, asian, hispanic
COMMUNITIES_CRIME_COLUMN = 127
COMMUNITIES_CRIME_THRESHOLD = 0.5

# German Credit (numeric version, 24 attributes + class, whitespace separated)
GERMAN_CLASS_COLUMN = 24
GERMAN_GOOD_CLASS = 1
GERMAN_STATUS_COLUMN = 8  # personal status and sex

# Ingestion
MISSING_COLUMN_FRACTION = 0.5

# Cache file columns
FEATURE_PREFIX = 'f:'
GROUP_COLUMN = 'group'
LABEL_COLUMN = 'label'
SIDECAR_SUFFIX = '.meta'

# Output files
SWEEP_FILE = 'sweep.csv'
COF_FILE = 'cof.csv'
SUMMARY_FILE = 'summary.csv'
META_FILE = 'meta.txt'
LEDGER_FILE = 'ledger.sqlite3'
CSV_FLOAT_FORMAT = '%.17g'
