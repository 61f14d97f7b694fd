class SelboxError(Exception):
    """用户可见错误的基类。

    各模块在抛出处定义具体子类（解析错误、未规范化、退化体积等）；
    命令行层将其统一映射为退出码 1，其余异常视为内部错误（退出码 2）。
    """
    pass
