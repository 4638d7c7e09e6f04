VERSION = 'v1.0'
RELEASE_DATE = '2026-Oct-18'
AUTHOR = 'FoldMark contributors'


def banner(tool):
    return 'FoldMark ver. {} ({})'.format(VERSION, RELEASE_DATE)
