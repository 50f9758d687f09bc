"""Empty __init__ for autograd package"""
