import os
import sys

# 让 tests/ 能直接导入顶层的 core / services / ui 包
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
