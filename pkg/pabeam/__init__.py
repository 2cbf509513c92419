"""线阵光声成像波束形成工具包：DAS / DMAS / MV / EIBMV / EIBMV-DMAS"""

__version__ = "0.1.0"
