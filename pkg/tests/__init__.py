"""
EDiT Sim 测试套件

使用 pytest 进行单元测试和集成测试。
"""
