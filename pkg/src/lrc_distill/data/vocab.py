PAD_ID = 0
SEP_ID = 1
START_ID = 2
ZERO_ID = 3
ONE_ID = 4

# Every id below this value is reserved; content tokens start here.
FIRST_CONTENT_ID = 3

__all__ = ["FIRST_CONTENT_ID", "ONE_ID", "PAD_ID", "SEP_ID", "START_ID", "ZERO_ID"]
