from .cfg_utils import *
from .logging import *
from .np_utils import *
from .os_utils import *
