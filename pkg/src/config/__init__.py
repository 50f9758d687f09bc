"""Empty __init__ for config package"""
