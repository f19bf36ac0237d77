# Field calculus package
