"""
FoldMark Test Suite
Geometry, feature and pipeline tests for the FoldMark expression recognizer.
"""
