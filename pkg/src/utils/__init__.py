from utils.basics.os_utils import *
