from .exp import *
