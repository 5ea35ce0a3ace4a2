# -*- coding: utf-8 -*-
"""
kgap - k 件物品拍卖收益差距的数值工具

主入口：加载配置、初始化日志，然后分派到命令行子命令。
"""

from ui.cli import main


if __name__ == "__main__":
    main()
