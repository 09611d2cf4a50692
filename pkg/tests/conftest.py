import os
import tempfile

# keep the ghost-weight cache out of the working tree during tests
os.environ.setdefault("NULLWAVE_CACHE", os.path.join(tempfile.gettempdir(), "nullwave_q_table.npz"))
