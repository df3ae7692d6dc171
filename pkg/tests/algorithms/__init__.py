# Tests for slice_core/algorithms/
