"""Empty __init__ for persistence package"""
