#include <stdio.h>
#include <stdlib.h>
#include <string.h>
#include <unistd.h>

static void printLine(const char *line)
{
    if (line != NULL) puts(line);
}

void CWE78_OS_Command_Injection__char_console_popen_02_bad(void)
{
    char data[100] = "ls ";
    size_t dataLen = strlen(data);
    if (fgets(data + dataLen, (int)(100 - dataLen), stdin) != NULL) {
        dataLen = strlen(data);
        if (dataLen > 0 && data[dataLen - 1] == '\n') data[dataLen - 1] = '\0';
    }
    FILE *pipe = popen(data, "w");
    if (pipe != NULL) pclose(pipe);
}

int main(void)
{
    printLine("Calling CWE78_OS_Command_Injection__char_console_popen_02_bad()...");
    CWE78_OS_Command_Injection__char_console_popen_02_bad();
    printLine("Finished");
    return 0;
}
