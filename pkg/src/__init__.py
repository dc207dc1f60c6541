# GPDeriv Source Package
